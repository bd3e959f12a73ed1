"""Randomized measurement settings, shot acquisition and the dataset format.

A setting is a string of per-qubit Pauli basis labels, qubit 0 first
(``"ZXY"`` measures qubit 0 in Z, qubit 1 in X, qubit 2 in Y). Outcome
bitstrings use the same order.

Dataset files are JSON Lines: one header object followed by one object per
setting::

    {"platform": "ionq", "circuit_label": "ghz5", "n_qubits": 5, "m_u": 100, "m_s": 2000, "seed": 7}
    {"bases": "ZXYZZ", "counts": {"00000": 981, "11111": 1019}}
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from . import circuits as qc
from .errors import CapacityError, DatasetError
from .platforms import (
    DM_MAX_QUBITS,
    TRAJECTORY_MAX_QUBITS,
    PlatformProfile,
    compile_for_platform,
    permute_density_matrix,
    sample_error_patterns,
    simulate_density_matrix,
    trajectory_state,
)
from .seeding import spawn_generators

BASES = "XYZ"
SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
# rotation u_b taking the eigenbasis of Pauli b to the computational basis
BASIS_ROTATIONS = {"X": qc.H, "Y": qc.H @ SDG, "Z": qc.I2}


def bitstring(index: int, n: int) -> str:
    """Outcome index -> qubit-0-first bitstring."""
    return format(index, f"0{n}b")[::-1] if n else ""


def bit_index(bits: str) -> int:
    return int(bits[::-1], 2)


# --- data model -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SettingRecord:
    bases: str
    counts: dict
    shots: int

    @cached_property
    def basis_indices(self) -> np.ndarray:
        return np.array([BASES.index(b) for b in self.bases], dtype=np.int64)

    @cached_property
    def outcome_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted outcome indices and their counts, zero counts dropped."""
        items = sorted((bit_index(s), c) for s, c in self.counts.items() if c > 0)
        idx = np.array([i for i, _ in items], dtype=np.int64)
        cnt = np.array([c for _, c in items], dtype=np.int64)
        return idx, cnt

    @property
    def n_qubits(self) -> int:
        return len(self.bases)


@dataclass(eq=False)
class MeasurementDataset:
    platform: str
    circuit_label: str
    n_qubits: int
    records: list[SettingRecord]
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def __len__(self):
        return len(self.records)

    @property
    def m_u(self) -> int:
        return len(self.records)

    @property
    def m_s(self) -> int | None:
        shots = {r.shots for r in self.records}
        return shots.pop() if len(shots) == 1 else None

    @property
    def total_shots(self) -> int:
        return sum(r.shots for r in self.records)

    @property
    def settings(self) -> list[str]:
        return [r.bases for r in self.records]

    def validate(self) -> None:
        n = self.n_qubits
        for i, rec in enumerate(self.records):
            if len(rec.bases) != n or any(b not in BASES for b in rec.bases):
                raise DatasetError(f"bases {rec.bases!r} is not a length-{n} X/Y/Z string", i)
            total = 0
            for key, value in rec.counts.items():
                if len(key) != n or set(key) - {"0", "1"}:
                    raise DatasetError(f"outcome {key!r} is not a length-{n} bitstring", i)
                if not isinstance(value, (int, np.integer)) or value < 0:
                    raise DatasetError(f"count for {key!r} must be a non-negative integer", i)
                total += int(value)
            if total != rec.shots:
                raise DatasetError(f"counts sum to {total} but shots = {rec.shots}", i)

    def header(self) -> dict:
        head = {
            "platform": self.platform,
            "circuit_label": self.circuit_label,
            "n_qubits": self.n_qubits,
            "m_u": self.m_u,
            "m_s": self.m_s,
            "seed": self.seed,
        }
        head.update(self.metadata)
        return head

    def dumps(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        uniform = self.m_s is not None
        for rec in self.records:
            entry = {"bases": rec.bases, "counts": {k: int(rec.counts[k]) for k in sorted(rec.counts)}}
            if not uniform:
                entry["shots"] = rec.shots
            lines.append(json.dumps(entry, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def with_records(self, records, **changes) -> "MeasurementDataset":
        fields = dict(platform=self.platform, circuit_label=self.circuit_label,
                      n_qubits=self.n_qubits, seed=self.seed, metadata=dict(self.metadata))
        fields.update(changes)
        return MeasurementDataset(records=list(records), **fields)


_HEADER_KEYS = ("platform", "circuit_label", "n_qubits", "m_u", "m_s", "seed")


def parse_dataset(text: str) -> MeasurementDataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DatasetError("empty dataset file")
    try:
        header = json.loads(lines[0])
        entries = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise DatasetError(f"parse error: {exc}") from exc
    missing = [k for k in ("platform", "circuit_label", "n_qubits") if k not in header]
    if missing:
        raise DatasetError(f"header is missing {missing}")
    m_s = header.get("m_s")
    records = []
    for i, entry in enumerate(entries):
        if "bases" not in entry or "counts" not in entry:
            raise DatasetError("record needs 'bases' and 'counts'", i)
        shots = entry.get("shots", m_s)
        if shots is None:
            raise DatasetError("no shot count in record or header", i)
        records.append(SettingRecord(entry["bases"], dict(entry["counts"]), int(shots)))
    if header.get("m_u") is not None and header["m_u"] != len(records):
        raise DatasetError(f"header m_u={header['m_u']} but file has {len(records)} records")
    metadata = {k: v for k, v in header.items() if k not in _HEADER_KEYS}
    return MeasurementDataset(header["platform"], header["circuit_label"], int(header["n_qubits"]),
                              records, header.get("seed"), metadata)


def ingest_dataset(path) -> MeasurementDataset:
    """Load and validate a measurement-record file (simulated or real device)."""
    return parse_dataset(Path(path).read_text())


# --- settings -------------------------------------------------------------

def _to_setting(row) -> str:
    return "".join(BASES[int(b)] for b in row)


def sample_settings_random(n: int, m_u: int, rng: np.random.Generator) -> list[str]:
    """``m_u`` settings with every basis label i.i.d. uniform."""
    if m_u < 1:
        raise ValueError("m_u must be >= 1")
    return [_to_setting(row) for row in rng.integers(0, 3, size=(m_u, n))]


def all_pauli_settings(n: int) -> list[str]:
    """All ``3**n`` Pauli-basis settings (the tomographically complete set)."""
    return ["".join(p) for p in itertools.product(BASES, repeat=n)]


def subsample_settings(settings, m_u: int, rng: np.random.Generator) -> list[int]:
    """Indices of ``m_u`` settings drawn uniformly without replacement."""
    if m_u > len(settings):
        raise ValueError(f"cannot draw {m_u} of {len(settings)} settings")
    return sorted(int(i) for i in rng.choice(len(settings), size=m_u, replace=False))


# 26 directions of the {-1,0,1}^3 cube lattice: 6 axes, 12 edges, 8 corners
BLOCH_DESIGN = np.array(
    [v for v in itertools.product((-1, 0, 1), repeat=3) if any(v)], dtype=float
)
BLOCH_DESIGN /= np.linalg.norm(BLOCH_DESIGN, axis=1, keepdims=True)


def _measured_distribution(basis: str, r: np.ndarray) -> np.ndarray:
    rho = 0.5 * (qc.I2 + r[0] * qc.X + r[1] * qc.Y + r[2] * qc.Z)
    u = BASIS_ROTATIONS[basis]
    return np.real(np.diag(u @ rho @ u.conj().T))


def _single_qubit_distance(a: str, b: str) -> float:
    # trace distance between the rotated states as read out by the
    # computational-basis measurement, maximised over the design
    best = 0.0
    for r in BLOCH_DESIGN:
        diff = _measured_distribution(a, r) - _measured_distribution(b, r)
        best = max(best, float(np.sum(np.abs(diff))))
    return best


@lru_cache(maxsize=None)
def single_qubit_distance_table() -> np.ndarray:
    table = np.zeros((3, 3))
    for i, a in enumerate(BASES):
        for j, b in enumerate(BASES):
            table[i, j] = 0.0 if a == b else _single_qubit_distance(a, b)
    return table


def setting_distance(a: str, b: str, aggregation: str = "sum") -> float:
    """Distance between two product settings (sum or max of per-qubit distances)."""
    if len(a) != len(b):
        raise ValueError(f"settings differ in length: {len(a)} vs {len(b)}")
    table = single_qubit_distance_table()
    per_qubit = [table[BASES.index(x), BASES.index(y)] for x, y in zip(a, b)]
    if not per_qubit:
        return 0.0
    if aggregation == "sum":
        return float(sum(per_qubit))
    if aggregation == "max":
        return float(max(per_qubit))
    raise ValueError(f"unknown aggregation {aggregation!r}")


def sample_settings_greedy(n: int, m_u: int, rng: np.random.Generator, n_candidates: int = 200,
                           aggregation: str = "sum", max_redraws: int = 100) -> list[str]:
    """Greedy far-apart settings.

    The first setting is uniform. Each later one is the candidate, among
    ``n_candidates`` fresh uniform draws, with the largest summed distance to
    the settings chosen so far (ties go to the earliest draw). Candidates that
    repeat an already-chosen setting are skipped while unused settings exist.
    """
    if m_u < 1:
        raise ValueError("m_u must be >= 1")
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    table = single_qubit_distance_table()
    chosen_rows = [rng.integers(0, 3, size=n)]
    chosen = {tuple(chosen_rows[0])}
    # counts[k, b]: how many chosen settings measure qubit k in basis b
    counts = np.zeros((n, 3))
    counts[np.arange(n), chosen_rows[0]] += 1
    exhaustive = 3**n
    for _ in range(1, m_u):
        cands = None
        for _attempt in range(max_redraws):
            draw = rng.integers(0, 3, size=(n_candidates, n))
            if len(chosen) >= exhaustive:
                cands = draw
                break
            keep = np.array([tuple(row) not in chosen for row in draw])
            if keep.any():
                cands = draw[keep]
                break
        if cands is None:
            unused = [r for r in itertools.product(range(3), repeat=n) if r not in chosen]
            cands = np.array(unused[:1])
        if aggregation == "sum":
            # sum_j d(c, u_j) = sum_k sum_b counts[k, b] * table[c_k, b]
            scores = np.einsum("kb,mkb->m", counts, table[cands])
        else:
            prev = np.array(chosen_rows)
            per_qubit = table[cands[:, None, :], prev[None, :, :]]
            scores = per_qubit.max(axis=2).sum(axis=1)
        best = cands[int(np.argmax(scores))]
        chosen_rows.append(best)
        chosen.add(tuple(best))
        counts[np.arange(n), best] += 1
    return [_to_setting(row) for row in chosen_rows]


# --- acquisition ----------------------------------------------------------

def _rotations(setting: str):
    return [BASIS_ROTATIONS[b] for b in setting]


class PreparedState:
    """A platform's noisy state for one circuit, ready to be measured.

    Circuits up to ``dm_max_qubits`` are simulated once as an exact density
    matrix; larger ones are sampled trajectory by trajectory, with the
    pure state of every distinct error pattern cached across settings.
    """

    def __init__(self, platform: PlatformProfile, circuit: qc.Circuit,
                 dm_max_qubits: int = DM_MAX_QUBITS,
                 trajectory_max_qubits: int = TRAJECTORY_MAX_QUBITS,
                 cache_size: int = 512):
        self.platform = platform
        self.circuit = circuit
        self.n_qubits = circuit.n_qubits
        if self.n_qubits > trajectory_max_qubits:
            raise CapacityError(
                f"{self.n_qubits} qubits exceeds the trajectory cap of {trajectory_max_qubits}"
            )
        self.physical, self.final_layout = compile_for_platform(circuit, platform)
        self._relabel = self.final_layout != list(range(self.n_qubits))
        if self.n_qubits <= dm_max_qubits:
            self.method = "density-matrix"
            rho = simulate_density_matrix(self.physical, platform.noise, dm_max_qubits)
            if self._relabel:
                rho = permute_density_matrix(rho, self.final_layout)
            self.rho = rho
        else:
            self.method = "trajectory"
            self.rho = None
        self._state = lru_cache(maxsize=cache_size)(self._trajectory)

    def _trajectory(self, key: bytes) -> np.ndarray:
        pattern = np.frombuffer(key, dtype=np.int64)
        psi = trajectory_state(self.physical, pattern)
        if self._relabel:
            psi = qc.permute_qubits(psi, self.final_layout, self.n_qubits)
        return psi

    def probabilities(self, setting: str) -> np.ndarray:
        """Exact Born probabilities in the setting's basis (density-matrix path)."""
        if self.rho is None:
            raise CapacityError("exact probabilities need the density-matrix path")
        n = self.n_qubits
        t = self.rho.matrix.reshape((2,) * (2 * n))
        for q, u in enumerate(_rotations(setting)):
            if setting[q] == "Z":
                continue
            ax = qc.qubit_axis(q, n)
            t = qc.apply_matrix(t, u, [ax])
            t = qc.apply_matrix(t, u.conj(), [n + ax])
        probs = np.real(np.diagonal(t.reshape(2**n, 2**n))).copy()
        return _normalise(probs)

    def _ideal_counts(self, setting: str, m_s: int, rng: np.random.Generator) -> np.ndarray:
        if self.method == "density-matrix":
            return rng.multinomial(m_s, self.probabilities(setting))
        n = self.n_qubits
        patterns = sample_error_patterns(self.physical, self.platform.noise, rng, m_s)
        unique, multiplicity = np.unique(patterns, axis=0, return_counts=True)
        counts = np.zeros(2**n, dtype=np.int64)
        rots = _rotations(setting)
        for pattern, mult in zip(unique, multiplicity):
            psi = self._state(np.ascontiguousarray(pattern, dtype=np.int64).tobytes())
            amp = qc.apply_local(psi, rots, n)
            counts += rng.multinomial(int(mult), _normalise(np.abs(amp) ** 2))
        return counts

    def sample(self, setting: str, m_s: int, rng: np.random.Generator) -> SettingRecord:
        if m_s < 1:
            raise ValueError("m_s must be >= 1")
        if len(setting) != self.n_qubits:
            raise ValueError(f"setting {setting!r} does not match {self.n_qubits} qubits")
        n = self.n_qubits
        counts = self._ideal_counts(setting, m_s, rng)
        eps = self.platform.noise.readout_eps
        if eps > 0:
            nz = np.flatnonzero(counts)
            outcomes = np.repeat(nz, counts[nz])
            flips = rng.random((m_s, n)) < eps
            outcomes = outcomes ^ (flips.astype(np.int64) << np.arange(n)).sum(axis=1)
            counts = np.bincount(outcomes, minlength=2**n)
        nz = np.flatnonzero(counts)
        return SettingRecord(setting, {bitstring(int(i), n): int(counts[i]) for i in nz}, int(m_s))


def _normalise(probs: np.ndarray) -> np.ndarray:
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def acquire_shots(platform: PlatformProfile, circuit: qc.Circuit, setting: str, m_s: int,
                  rng: np.random.Generator, prepared: PreparedState | None = None) -> SettingRecord:
    """Measure ``m_s`` shots of the platform's state in one setting."""
    if prepared is None:
        prepared = PreparedState(platform, circuit)
    return prepared.sample(setting, m_s, rng)


def acquire_dataset(platform: PlatformProfile, circuit: qc.Circuit, settings, m_s: int,
                    seed, threads: int = 1, prepared: PreparedState | None = None,
                    metadata: dict | None = None) -> MeasurementDataset:
    """Acquire one record per setting.

    Every setting gets its own generator split from ``seed``, so the result
    does not depend on ``threads``.
    """
    if prepared is None:
        prepared = PreparedState(platform, circuit)
    settings = list(settings)
    rngs = spawn_generators(seed, len(settings))
    tasks = list(zip(settings, rngs))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda t: prepared.sample(t[0], m_s, t[1]), tasks))
    else:
        records = [prepared.sample(s, m_s, r) for s, r in tasks]
    seed_value = seed if isinstance(seed, (int, np.integer)) else None
    meta = {"technology": platform.technology}
    meta.update(metadata or {})
    return MeasurementDataset(platform.name, circuit.label, circuit.n_qubits, records,
                              None if seed_value is None else int(seed_value), meta)
