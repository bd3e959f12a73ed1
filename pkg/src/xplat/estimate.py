"""Overlap, purity and cross-platform fidelity estimators.

Two routes are provided:

Protocol I (cross-correlations)
    ``tr[rho_i rho_j] = 2^N avg_U sum_{s,s'} (-2)^(-D[s,s']) P_i(s) P_j(s')``
    with ``D`` the Hamming distance. The kernel factorises over qubits, so
    besides the literal sum over observed outcome pairs the same number can
    be had by applying ``[[1, -1/2], [-1/2, 1]]`` to every qubit axis of the
    dense probability vector. Whichever is cheaper is used per setting.

Protocol II (classical shadows)
    Each shot gives ``rho_hat = (x)_k (3 u_k^dag |s_k><s_k| u_k - I)``. The
    mean shadow is kept as its Pauli-coefficient vector (``4^N`` reals), so
    cross overlaps are one dot product and purities are the U-statistic over
    distinct shot pairs.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuits import apply_matrix, qubit_axis
from .errors import CapacityError, DatasetError, UndefinedValueError
from .measure import MeasurementDataset, SettingRecord
from .seeding import spawn_generators

SHADOW_MAX_QUBITS = 10
PROTOCOL_II_DEFAULT_MAX = 10

CROSS_KERNEL = np.array([[1.0, -0.5], [-0.5, 1.0]])
# counts -> shadow Pauli coefficients: identity part and 3 * (n0 - n1)
SHADOW_KERNEL = np.array([[1.0, 1.0], [3.0, -3.0]])


def hamming(s: str, t: str) -> int:
    if len(s) != len(t):
        raise ValueError(f"bitstrings differ in length: {len(s)} vs {len(t)}")
    return sum(a != b for a, b in zip(s, t))


# --- per-setting data ------------------------------------------------------

@dataclass(frozen=True)
class _Block:
    """One setting's data in array form.

    ``counts`` are per-outcome shot weights. ``self_weight`` is the sum of
    squared weights of the underlying individual shots; it equals the shot
    count for real data and is larger for bootstrap replicates, where one
    original shot may be drawn several times. Pairs of a shot with its own
    copies are excluded from the unbiased estimators.
    """

    bases: np.ndarray
    outcomes: np.ndarray
    counts: np.ndarray
    self_weight: float

    @property
    def shots(self) -> float:
        return float(self.counts.sum())


def _blocks(ds: MeasurementDataset) -> list[_Block]:
    if not ds.records:
        raise DatasetError(f"dataset {ds.platform!r} has no records")
    out = []
    for rec in ds.records:
        idx, cnt = rec.outcome_arrays
        out.append(_Block(rec.basis_indices, idx, cnt, float(cnt.sum())))
    return out


def _dense(block: _Block, n: int) -> np.ndarray:
    vec = np.zeros(2**n)
    vec[block.outcomes] = block.counts
    return vec


def _dense_rows(blocks, n: int) -> np.ndarray:
    out = np.zeros((len(blocks), 2**n))
    for row, b in zip(out, blocks):
        row[b.outcomes] = b.counts
    return out


def _kernel_apply(rows: np.ndarray, kernel: np.ndarray, n: int) -> np.ndarray:
    """Apply ``kernel`` to every qubit axis of each row of ``rows``."""
    t = rows.reshape((rows.shape[0],) + (2,) * n)
    for q in range(n):
        t = apply_matrix(t, kernel, [1 + qubit_axis(q, n)])
    return t.reshape(rows.shape[0], -1)


def _pair_sum(a: _Block, b: _Block) -> float:
    """``sum_{s,s'} (-1/2)^D[s,s'] n_a(s) n_b(s')`` over observed outcomes."""
    dist = np.bitwise_count(a.outcomes[:, None] ^ b.outcomes[None, :])
    weights = np.power(-0.5, dist)
    return float(a.counts.astype(float) @ weights @ b.counts.astype(float))


def _use_pairs(bi, bj, n: int) -> bool:
    pair_cost = sum(a.outcomes.size * b.outcomes.size for a, b in zip(bi, bj))
    return pair_cost <= len(bi) * n * 2**n


def _correlation_sums(bi, bj, n: int) -> np.ndarray:
    """Per-setting ``sum_{s,s'} (-1/2)^D n_i(s) n_j(s')`` (raw counts)."""
    if _use_pairs(bi, bj, n):
        return np.array([_pair_sum(a, b) for a, b in zip(bi, bj)])
    left = _dense_rows(bi, n)
    right = left if bi is bj else _dense_rows(bj, n)
    return np.einsum("us,us->u", left, _kernel_apply(right, CROSS_KERNEL, n))


# --- Protocol I -------------------------------------------------------------

def _check_aligned(ds_i: MeasurementDataset, ds_j: MeasurementDataset) -> None:
    if ds_i.n_qubits != ds_j.n_qubits:
        raise DatasetError(f"qubit counts differ: {ds_i.n_qubits} vs {ds_j.n_qubits}")
    if ds_i.settings != ds_j.settings:
        raise DatasetError("Protocol I needs both datasets measured in the same settings")


def _overlap1_values(bi, bj, n: int) -> np.ndarray:
    shots = np.array([a.shots * b.shots for a, b in zip(bi, bj)], dtype=float)
    return 2**n * _correlation_sums(bi, bj, n) / shots


def _purity1_values(blocks, n: int, unbiased: bool = True) -> np.ndarray:
    m = np.array([b.shots for b in blocks], dtype=float)
    total = _correlation_sums(blocks, blocks, n)
    if not unbiased:
        return 2**n * total / m**2
    q = np.array([b.self_weight for b in blocks], dtype=float)
    if np.any(m * m - q <= 0):
        raise ValueError("unbiased purity needs at least 2 shots per setting")
    # drop the pairs of each shot with itself (kernel weight 1); for plain
    # counts this is (total - M) / (M (M - 1))
    return 2**n * (total - q) / (m * m - q)


def overlap_protocol1(ds_i: MeasurementDataset, ds_j: MeasurementDataset) -> float:
    """Cross-correlation overlap estimate; settings must be aligned."""
    _check_aligned(ds_i, ds_j)
    return float(np.mean(_overlap1_values(_blocks(ds_i), _blocks(ds_j), ds_i.n_qubits)))


def purity_protocol1(ds: MeasurementDataset, unbiased: bool = True) -> float:
    """Purity from one dataset; ``unbiased=False`` gives the plug-in estimate."""
    return float(np.mean(_purity1_values(_blocks(ds), ds.n_qubits, unbiased)))


# --- Protocol II ------------------------------------------------------------

def _check_shadow_capacity(n: int) -> None:
    if n > SHADOW_MAX_QUBITS:
        raise CapacityError(
            f"dense mean shadow for {n} qubits exceeds the {SHADOW_MAX_QUBITS}-qubit guard"
        )


def _mask_bits(n: int) -> np.ndarray:
    masks = np.arange(2**n)
    return (masks[:, None] >> np.arange(n)) & 1


def _shadow_sum(blocks, n: int) -> np.ndarray:
    """Sum over shots of the shadows' Pauli coefficients (length ``4^n``).

    Pauli strings are indexed base 4, qubit 0 least significant, with
    digits I=0, X=1, Y=2, Z=3. The shadow operator is
    ``sum_Q coef[Q] * Q / 2^n`` (per shot).
    """
    _check_shadow_capacity(n)
    values = _kernel_apply(_dense_rows(blocks, n), SHADOW_KERNEL, n)
    bases = np.array([b.bases for b in blocks])
    # Pauli index of (setting u, subset mask A): sum_{k in A} (b_uk + 1) 4^k
    index = ((bases + 1) * 4 ** np.arange(n)) @ _mask_bits(n).T
    return np.bincount(index.ravel(), weights=values.ravel(), minlength=4**n)


def mean_shadow_coefficients(ds: MeasurementDataset) -> np.ndarray:
    """Pauli coefficients of the mean shadow; ``coef[Q] = <Q>`` estimate."""
    return _shadow_sum(_blocks(ds), ds.n_qubits) / ds.total_shots


def pauli_matrix(index: int, n: int) -> np.ndarray:
    from .circuits import PAULIS

    out = np.ones((1, 1), dtype=complex)
    for k in reversed(range(n)):
        out = np.kron(out, PAULIS[(index // 4**k) % 4])
    return out


def mean_shadow_matrix(ds: MeasurementDataset) -> np.ndarray:
    """Dense ``2^N x 2^N`` mean shadow (small N only)."""
    n = ds.n_qubits
    if n > 6:
        raise CapacityError("explicit mean-shadow matrices are limited to 6 qubits")
    coef = mean_shadow_coefficients(ds)
    rho = np.zeros((2**n, 2**n), dtype=complex)
    for q in np.flatnonzero(coef):
        rho += coef[q] * pauli_matrix(int(q), n)
    return rho / 2**n


def _overlap2_from_sums(ci, cj, mi, mj, n) -> float:
    return float(ci @ cj) / (2**n * mi * mj)


def _purity2_from_sum(c, m, n, unbiased=True, self_weight=None) -> float:
    q = m if self_weight is None else self_weight
    if m * m - q <= 0:
        raise ValueError("Protocol II purity needs at least 2 shots in total")
    square = float(c @ c) / 2**n  # = M^2 tr[rho_bar^2]
    if not unbiased:
        return square / m**2
    # every Pauli-basis shot has tr[rho_hat^2] = 5^N; for plain counts this
    # is (M^2 tr[rho_bar^2] - M 5^N) / (M (M - 1))
    return (square - q * 5.0**n) / (m * m - q)


def overlap_protocol2(ds_i: MeasurementDataset, ds_j: MeasurementDataset) -> float:
    """Classical-shadow overlap estimate; settings may differ."""
    if ds_i.n_qubits != ds_j.n_qubits:
        raise DatasetError(f"qubit counts differ: {ds_i.n_qubits} vs {ds_j.n_qubits}")
    n = ds_i.n_qubits
    ci, cj = _shadow_sum(_blocks(ds_i), n), _shadow_sum(_blocks(ds_j), n)
    return _overlap2_from_sums(ci, cj, ds_i.total_shots, ds_j.total_shots, n)


def purity_protocol2(ds: MeasurementDataset, unbiased: bool = True) -> float:
    n = ds.n_qubits
    return _purity2_from_sum(_shadow_sum(_blocks(ds), n), ds.total_shots, n, unbiased)


def shadow_pair_trace(shot_a, shot_b) -> float:
    """``tr[rho_hat_a rho_hat_b]`` for two single shots ``(bases, bits)``.

    Each qubit contributes ``9 |<a|b>|^2 - 4``: 5 for equal basis and bit,
    -4 for equal basis and opposite bit, 1/2 for different bases.
    """
    (ba, sa), (bb, sb) = shot_a, shot_b
    if len(ba) != len(bb):
        raise ValueError("shots have different lengths")
    value = 1.0
    for x, y, s, t in zip(ba, bb, sa, sb):
        fidelity = (1.0 if s == t else 0.0) if x == y else 0.5
        value *= 9.0 * fidelity - 4.0
    return value


def _shots(ds: MeasurementDataset):
    for rec in ds.records:
        for bits, count in sorted(rec.counts.items()):
            for _ in range(count):
                yield rec.bases, bits


def overlap_protocol2_pairwise(ds_i: MeasurementDataset, ds_j: MeasurementDataset) -> float:
    """Brute-force average of ``tr[rho_hat rho_hat']`` over all shot pairs."""
    si, sj = list(_shots(ds_i)), list(_shots(ds_j))
    if len(si) * len(sj) > 4_000_000:
        raise CapacityError("pairwise shadow validation is limited to small datasets")
    return float(np.mean([shadow_pair_trace(a, b) for a in si for b in sj]))


# --- fidelity -----------------------------------------------------------------

def fidelity(overlap: float, purity_i: float, purity_j: float) -> float:
    """``overlap / sqrt(purity_i * purity_j)``, never clamped."""
    if purity_i <= 0 or purity_j <= 0:
        raise UndefinedValueError(
            f"fidelity undefined for non-positive purity ({purity_i}, {purity_j})",
            purity_i=purity_i, purity_j=purity_j,
        )
    return float(overlap / np.sqrt(purity_i * purity_j))


def range_flags(value: float) -> list[str]:
    return [] if 0.0 <= value <= 1.0 else ["out_of_range"]


def resolve_protocol(protocol, n: int) -> str:
    if protocol in (None, "auto"):
        return "I" if n > PROTOCOL_II_DEFAULT_MAX else "II"
    p = str(protocol).upper()
    if p in ("1", "I"):
        return "I"
    if p in ("2", "II"):
        return "II"
    raise ValueError(f"unknown protocol {protocol!r}")


def _fidelity_parts(bi, bj, n, protocol):
    if protocol == "I":
        overlap = float(np.mean(_overlap1_values(bi, bj, n)))
        pi = float(np.mean(_purity1_values(bi, n)))
        pj = float(np.mean(_purity1_values(bj, n)))
    else:
        ci, cj = _shadow_sum(bi, n), _shadow_sum(bj, n)
        mi = sum(b.shots for b in bi)
        mj = sum(b.shots for b in bj)
        overlap = _overlap2_from_sums(ci, cj, mi, mj, n)
        pi = _purity2_from_sum(ci, mi, n, self_weight=sum(b.self_weight for b in bi))
        pj = _purity2_from_sum(cj, mj, n, self_weight=sum(b.self_weight for b in bj))
    return overlap, pi, pj


# --- bootstrap ----------------------------------------------------------------

def _resample_shots(block: _Block, copies: int, rng: np.random.Generator) -> _Block:
    """Draw ``copies * M`` shots with replacement from the block's ``M`` shots."""
    m = int(round(block.shots))
    weights = rng.multinomial(copies * m, np.full(m, 1.0 / m))
    starts = np.concatenate(([0], np.cumsum(block.counts)[:-1])).astype(np.int64)
    per_outcome = np.add.reduceat(weights, starts)
    keep = per_outcome > 0
    return _Block(block.bases, block.outcomes[keep], per_outcome[keep],
                  float(np.sum(weights.astype(float) ** 2)))


_CHUNK = 32  # Protocol I replicates processed together


class BootstrapError(RuntimeError):
    pass


@dataclass
class BootstrapResult:
    mean: float
    std: float
    replicates: np.ndarray
    discarded: int = 0


def _resample(blocks, pick, rng):
    # the shadow estimators pool shots, so copies of a setting are merged
    # and a shot drawn in two copies still counts as a self-pair
    copies = np.bincount(pick, minlength=len(blocks))
    return [_resample_shots(blocks[k], int(c), rng) for k, c in enumerate(copies) if c]


def _shot_weights(block: _Block, rng: np.random.Generator):
    """One with-replacement shot resample, as weights over the block's outcomes."""
    m = int(round(block.shots))
    weights = rng.multinomial(m, np.full(m, 1.0 / m))
    starts = np.concatenate(([0], np.cumsum(block.counts)[:-1])).astype(np.int64)
    return np.add.reduceat(weights, starts).astype(float), float(np.sum(weights.astype(float) ** 2))


def _draw_protocol1(bi, bj, rng):
    pick = rng.integers(0, len(bi), size=len(bi))
    wi = [_shot_weights(bi[k], rng) for k in pick]
    wj = [_shot_weights(bj[k], rng) for k in pick]
    return pick, wi, wj


_DIST_WEIGHTS = np.power(-0.5, np.arange(64))


def _pair_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _DIST_WEIGHTS[np.bitwise_count(a[:, None] ^ b[None, :])]


def _protocol1_replicates(bi, bj, n, draws, threads=1) -> np.ndarray:
    """Fidelity of each drawn Protocol I replicate (NaN where a purity is <= 0).

    Outcomes of a replicate are those of the original setting, only the
    weights change, so each setting's pair kernels are built once and shared
    by every copy of that setting across the drawn replicates.
    """
    n_rep, m_u = len(draws), len(bi)
    ov = np.empty((n_rep, m_u))
    pu_i = np.empty((n_rep, m_u))
    pu_j = np.empty((n_rep, m_u))
    where: dict[int, list[tuple[int, int]]] = {}
    for r, (pick, _, _) in enumerate(draws):
        for pos, k in enumerate(pick):
            where.setdefault(int(k), []).append((r, pos))

    def one_setting(k):
        slots = where[k]
        a, b = bi[k], bj[k]
        wi = np.array([draws[r][1][pos][0] for r, pos in slots])
        wj = np.array([draws[r][2][pos][0] for r, pos in slots])
        qi = np.array([draws[r][1][pos][1] for r, pos in slots])
        qj = np.array([draws[r][2][pos][1] for r, pos in slots])
        mi, mj = a.shots, b.shots
        cross = np.einsum("ca,ca->c", wi @ _pair_kernel(a.outcomes, b.outcomes), wj)
        self_i = np.einsum("ca,ca->c", wi @ _pair_kernel(a.outcomes, a.outcomes), wi)
        self_j = np.einsum("ca,ca->c", wj @ _pair_kernel(b.outcomes, b.outcomes), wj)
        rows, cols = np.array(slots).T
        ov[rows, cols] = 2**n * cross / (mi * mj)
        # a resample made of one shot repeated has no distinct pairs: NaN, discarded below
        with np.errstate(divide="ignore", invalid="ignore"):
            pu_i[rows, cols] = 2**n * (self_i - qi) / (mi * mi - qi)
            pu_j[rows, cols] = 2**n * (self_j - qj) / (mj * mj - qj)

    keys = sorted(where)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one_setting, keys))
    else:
        for k in keys:
            one_setting(k)
    o, pi, pj = ov.mean(axis=1), pu_i.mean(axis=1), pu_j.mean(axis=1)
    out = np.full(n_rep, np.nan)
    ok = (pi > 0) & (pj > 0)
    out[ok] = o[ok] / np.sqrt(pi[ok] * pj[ok])
    return out


def _replicate(bi, bj, n, protocol, paired, rng):
    pick = rng.integers(0, len(bi), size=len(bi))
    pick_j = pick if paired else rng.integers(0, len(bj), size=len(bj))
    ri = _resample(bi, pick, rng)
    rj = _resample(bj, pick_j, rng)
    overlap, pi, pj = _fidelity_parts(ri, rj, n, protocol)
    if pi <= 0 or pj <= 0:
        return None
    return fidelity(overlap, pi, pj)


def bootstrap_fidelity_detail(ds_i, ds_j, protocol, B: int, rng, threads: int = 1) -> BootstrapResult:
    if B < 2:
        raise ValueError("bootstrap needs B >= 2 replicates")
    n = ds_i.n_qubits
    protocol = resolve_protocol(protocol, n)
    if protocol == "I":
        _check_aligned(ds_i, ds_j)
    elif ds_i.n_qubits != ds_j.n_qubits:
        raise DatasetError(f"qubit counts differ: {ds_i.n_qubits} vs {ds_j.n_qubits}")
    bi, bj = _blocks(ds_i), _blocks(ds_j)
    # shared settings are resampled jointly, as they were measured jointly
    paired = protocol == "I" or ds_i.settings == ds_j.settings
    rngs = spawn_generators(rng, B)
    if protocol == "I":
        values = []
        for start in range(0, B, _CHUNK):
            draws = [_draw_protocol1(bi, bj, g) for g in rngs[start:start + _CHUNK]]
            values.extend(_protocol1_replicates(bi, bj, n, draws, threads))
        values = [None if np.isnan(v) else float(v) for v in values]
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda g: _replicate(bi, bj, n, protocol, paired, g), rngs))
    else:
        values = [_replicate(bi, bj, n, protocol, paired, g) for g in rngs]
    kept = np.array([v for v in values if v is not None])
    discarded = B - kept.size
    if discarded > B / 2:
        raise BootstrapError(f"{discarded} of {B} replicates had non-positive purity")
    return BootstrapResult(float(np.mean(kept)), float(np.std(kept, ddof=1)) if kept.size > 1 else 0.0,
                           kept, discarded)


def bootstrap_fidelity(ds_i, ds_j, protocol, B: int, rng, threads: int = 1) -> tuple[float, float]:
    """Hierarchical bootstrap (settings, then shots) of the fidelity: (mean, std)."""
    res = bootstrap_fidelity_detail(ds_i, ds_j, protocol, B, rng, threads)
    return res.mean, res.std


# --- combined estimate -------------------------------------------------------

@dataclass
class FidelityEstimate:
    pair: tuple[str, str]
    protocol: str
    overlap: float
    purity_i: float
    purity_j: float
    fidelity: float
    bootstrap_mean: float | None = None
    bootstrap_std: float | None = None
    bootstrap_B: int = 0
    m_u_used: int = 0
    m_s: int | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "protocol": self.protocol,
            "overlap": self.overlap,
            "purities": [self.purity_i, self.purity_j],
            "fidelity": self.fidelity,
            "bootstrap": {"B": self.bootstrap_B, "mean": self.bootstrap_mean,
                          "std": self.bootstrap_std},
            "m_u": self.m_u_used,
            "m_s": self.m_s,
            "flags": list(self.flags),
        }


def estimate_fidelity(ds_i: MeasurementDataset, ds_j: MeasurementDataset, protocol="auto",
                      B: int = 0, rng=None, threads: int = 1) -> FidelityEstimate:
    n = ds_i.n_qubits
    protocol = resolve_protocol(protocol, n)
    if protocol == "I":
        _check_aligned(ds_i, ds_j)
    elif ds_i.n_qubits != ds_j.n_qubits:
        raise DatasetError(f"qubit counts differ: {ds_i.n_qubits} vs {ds_j.n_qubits}")
    overlap, pi, pj = _fidelity_parts(_blocks(ds_i), _blocks(ds_j), n, protocol)
    value = fidelity(overlap, pi, pj)
    est = FidelityEstimate((ds_i.platform, ds_j.platform), protocol, overlap, pi, pj, value,
                           m_u_used=min(ds_i.m_u, ds_j.m_u), m_s=ds_i.m_s,
                           flags=range_flags(value))
    if B:
        boot = bootstrap_fidelity_detail(ds_i, ds_j, protocol, B, rng, threads)
        est.bootstrap_mean, est.bootstrap_std, est.bootstrap_B = boot.mean, boot.std, B
        if boot.discarded:
            est.flags.append(f"bootstrap_discarded:{boot.discarded}")
    return est


# --- subsystems ----------------------------------------------------------------

def subsystem_restrict(ds: MeasurementDataset, qubits) -> MeasurementDataset:
    """Keep only ``qubits`` (in the given order); other bits are traced out."""
    qubits = [int(q) for q in qubits]
    if not qubits:
        raise ValueError("subsystem must contain at least one qubit")
    if len(set(qubits)) != len(qubits) or min(qubits) < 0 or max(qubits) >= ds.n_qubits:
        raise ValueError(f"invalid subsystem {qubits} for {ds.n_qubits} qubits")
    records = []
    for rec in ds.records:
        counts: dict[str, int] = {}
        for bits, c in rec.counts.items():
            key = "".join(bits[q] for q in qubits)
            counts[key] = counts.get(key, 0) + c
        records.append(SettingRecord("".join(rec.bases[q] for q in qubits), counts, rec.shots))
    meta = dict(ds.metadata)
    meta["subsystem"] = qubits
    return ds.with_records(records, n_qubits=len(qubits), metadata=meta)


def subsystem_fidelities(ds_i, ds_j, size: int, protocol="auto", max_subsets: int | None = None,
                         rng=None) -> list[tuple[tuple[int, ...], float]]:
    """Fidelity for every (or a random sample of) ``size``-qubit subsystem."""
    subsets = list(itertools.combinations(range(ds_i.n_qubits), size))
    if max_subsets is not None and len(subsets) > max_subsets:
        pick = sorted(rng.choice(len(subsets), size=max_subsets, replace=False))
        subsets = [subsets[k] for k in pick]
    out = []
    for sub in subsets:
        ri, rj = subsystem_restrict(ds_i, sub), subsystem_restrict(ds_j, sub)
        est = estimate_fidelity(ri, rj, protocol)
        out.append((sub, est.fidelity))
    return out


# --- splitting for self-consistency -------------------------------------------

def split_settings(ds: MeasurementDataset):
    """Even/odd setting halves of one dataset, as two pseudo-platforms."""
    if ds.m_u < 2:
        raise DatasetError("need at least 2 settings to split")
    a = ds.with_records(ds.records[0::2], platform=f"{ds.platform}[even]")
    b = ds.with_records(ds.records[1::2], platform=f"{ds.platform}[odd]")
    return a, b


def split_shots(ds: MeasurementDataset, rng: np.random.Generator):
    """Split every setting's shots into two random halves (settings stay aligned)."""
    first, second = [], []
    for rec in ds.records:
        if rec.shots < 4:
            raise DatasetError("need at least 4 shots per setting to split")
        keys = sorted(rec.counts)
        colors = np.array([rec.counts[k] for k in keys], dtype=np.int64)
        half = rng.multivariate_hypergeometric(colors, rec.shots // 2)
        c1 = {k: int(h) for k, h in zip(keys, half) if h}
        c2 = {k: int(c - h) for k, c, h in zip(keys, colors, half) if c - h}
        first.append(SettingRecord(rec.bases, c1, int(half.sum())))
        second.append(SettingRecord(rec.bases, c2, int(rec.shots - half.sum())))
    return (ds.with_records(first, platform=f"{ds.platform}[a]"),
            ds.with_records(second, platform=f"{ds.platform}[b]"))
