"""Pauli-expectation features from measurement data, and PCA on them.

A Pauli string is written qubit-0-first over ``IXYZ``, e.g. ``"ZZIII"`` is
``Z`` on qubits 0 and 1. A string is evaluable on a shot if every
non-identity factor matches the basis that qubit was measured in.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .measure import BASES, MeasurementDataset
from .seeding import spawn_generators

DEFAULT_WEIGHT = 2
DEFAULT_N_MIN = 20


@dataclass(frozen=True)
class ShotSample:
    """Individual shots: ``bases[k, q]`` in 0..2 (X, Y, Z), ``bits[k, q]`` in 0..1."""

    bases: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        if self.bases.shape != self.bits.shape or self.bases.ndim != 2:
            raise ValueError("bases and bits must be (shots, n) arrays of equal shape")

    def __len__(self):
        return self.bases.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.bases.shape[1]

    def take(self, index) -> "ShotSample":
        return ShotSample(self.bases[index], self.bits[index])


def dataset_shots(ds: MeasurementDataset) -> ShotSample:
    """Expand a dataset's counts into one row per shot (record order, sorted outcomes)."""
    n = ds.n_qubits
    bases, outcomes = [], []
    for rec in ds.records:
        idx, cnt = rec.outcome_arrays
        outcomes.append(np.repeat(idx, cnt))
        bases.append(np.broadcast_to(rec.basis_indices, (int(cnt.sum()), n)))
    outcomes = np.concatenate(outcomes) if outcomes else np.zeros(0, dtype=np.int64)
    bits = (outcomes[:, None] >> np.arange(n)) & 1
    bases = np.concatenate(bases) if bases else np.zeros((0, n), dtype=np.int64)
    return ShotSample(bases.astype(np.int8), bits.astype(np.int8))


def _support_key(sample: ShotSample, support) -> np.ndarray:
    """Base-3 code of the measured bases on ``support`` (first qubit most significant)."""
    key = np.zeros(len(sample), dtype=np.int64)
    for q in support:
        key = key * 3 + sample.bases[:, q]
    return key


def _string(n: int, support, code: int) -> str:
    labels = ["I"] * n
    for q in reversed(support):
        code, b = divmod(code, 3)
        labels[q] = BASES[b]
    return "".join(labels)


def _parse(pauli: str):
    support = tuple(q for q, c in enumerate(pauli) if c != "I")
    code = 0
    for q in support:
        code = code * 3 + BASES.index(pauli[q])
    return support, code


def evaluable_paulis(sample: ShotSample, w: int = DEFAULT_WEIGHT, n_min: int = DEFAULT_N_MIN) -> list[str]:
    """Non-identity strings of weight <= ``w`` matched by at least ``n_min`` shots.

    Ordered by weight, then support, then bases in ``XYZ`` order.
    """
    n = sample.n_qubits
    out = []
    for weight in range(1, min(w, n) + 1):
        for support in combinations(range(n), weight):
            counts = np.bincount(_support_key(sample, support), minlength=3**weight)
            out.extend(_string(n, support, int(c)) for c in np.nonzero(counts >= n_min)[0])
    return out


def pauli_expectations(sample: ShotSample, paulis) -> np.ndarray:
    """Average of the +-1 outcome parity over the shots matching each string."""
    paulis = list(paulis)
    out = np.empty(len(paulis))
    by_support: dict[tuple, list[tuple[int, int]]] = {}
    for k, p in enumerate(paulis):
        if len(p) != sample.n_qubits or set(p) - set("IXYZ"):
            raise ValueError(f"{p!r} is not a length-{sample.n_qubits} Pauli string")
        support, code = _parse(p)
        if not support:
            raise ValueError("the identity string is not a feature")
        by_support.setdefault(support, []).append((k, code))
    for support, items in by_support.items():
        key = _support_key(sample, support)
        sign = 1 - 2 * (sample.bits[:, list(support)].sum(axis=1) % 2)
        size = 3 ** len(support)
        hits = np.bincount(key, minlength=size)
        total = np.bincount(key, weights=sign, minlength=size)
        for k, code in items:
            if hits[code] == 0:
                raise ValueError(f"Pauli string {paulis[k]!r} is not evaluable on this sample")
            out[k] = total[code] / hits[code]
    return out


# --- feature matrix ----------------------------------------------------------

@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: list[str]
    labels: list[dict]
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["platform", "technology", "circuit"] + self.columns)
            for lab, row in zip(self.labels, self.values):
                writer.writerow([lab["platform"], lab["technology"], lab["circuit"]]
                                + [repr(float(v)) for v in row])


def _row_indices(total: int, size: int, n_repeat: int, strict: bool, rng) -> list[np.ndarray]:
    if strict:
        # disjoint samples: consecutive blocks of one permutation
        perm = rng.permutation(total)
        return [np.sort(perm[r * size:(r + 1) * size]) for r in range(n_repeat)]
    return [np.sort(rng.choice(total, size=size, replace=False)) for _ in range(n_repeat)]


def build_feature_matrix(datasets, shots_per_sample: int = 1000, n_repeat: int = 500,
                         w: int = DEFAULT_WEIGHT, n_min: int = DEFAULT_N_MIN, rng=None,
                         strict: bool = False) -> FeatureMatrix:
    """Rows of Pauli expectations, ``n_repeat`` per dataset, over shared columns.

    Shots are drawn without replacement inside a row. With ``strict=True`` the
    rows of one dataset are also disjoint, which needs
    ``n_repeat * shots_per_sample`` shots.
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("no datasets given")
    n = datasets[0].n_qubits
    if any(ds.n_qubits != n for ds in datasets):
        raise DatasetError("datasets have different qubit counts")
    rng = np.random.default_rng(rng)
    gens = spawn_generators(rng, len(datasets))
    samples, labels = [], []
    for ds, gen in zip(datasets, gens):
        total = ds.total_shots
        if shots_per_sample > total:
            raise DatasetError(
                f"insufficient shots in {ds.platform!r}: {total} < shots_per_sample={shots_per_sample}"
            )
        if strict and shots_per_sample * n_repeat > total:
            raise DatasetError(
                f"insufficient shots in {ds.platform!r} for {n_repeat} disjoint samples of "
                f"{shots_per_sample}: {total} available"
            )
        shots = dataset_shots(ds)
        label = {"platform": ds.platform, "technology": ds.metadata.get("technology", ""),
                 "circuit": ds.circuit_label}
        for index in _row_indices(total, shots_per_sample, n_repeat, strict, gen):
            samples.append(shots.take(index))
            labels.append(label)
    columns = None
    for s in samples:
        found = set(evaluable_paulis(s, w, n_min))
        columns = found if columns is None else columns & found
    if not columns:
        raise DatasetError("no Pauli string is evaluable in every sample")
    # keep the canonical (weight, support, basis) order
    columns = [p for p in evaluable_paulis(samples[0], w, n_min) if p in columns]
    values = np.array([pauli_expectations(s, columns) for s in samples])
    meta = {"w": w, "n_min": n_min, "shots_per_sample": shots_per_sample,
            "n_repeat": n_repeat, "strict": strict}
    return FeatureMatrix(values, columns, labels, meta)


# --- PCA ---------------------------------------------------------------------

@dataclass
class PCAResult:
    projections: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    zero_variance: bool = False

    def to_dict(self) -> dict:
        return {
            "explained_variance_ratio": [float(v) for v in self.explained_variance_ratio],
            "zero_variance": self.zero_variance,
        }


def pca_project(matrix, k: int = 2) -> PCAResult:
    """Project mean-centred rows onto the top ``k`` principal axes.

    Each axis is signed so its largest-magnitude loading is positive.
    """
    x = np.asarray(matrix.values if isinstance(matrix, FeatureMatrix) else matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("PCA needs a 2-d matrix with at least 2 rows")
    rows, cols = x.shape
    if not 1 <= k <= min(rows, cols):
        raise ValueError(f"k={k} must be between 1 and min(rows, cols)={min(rows, cols)}")
    x = x - x.mean(axis=0)
    _, sing, vt = np.linalg.svd(x, full_matrices=False)
    var = sing**2
    total = var.sum()
    if total <= 1e-24 * max(1, x.size):
        return PCAResult(np.zeros((rows, k)), np.zeros((k, cols)), np.zeros(k), True)
    axes = vt[:k].copy()
    for a in axes:
        if a[np.argmax(np.abs(a))] < 0:
            a *= -1
    return PCAResult(x @ axes.T, axes, var[:k] / total)


def write_pca(result: PCAResult, labels, csv_path, json_path, extra: dict | None = None) -> None:
    """Projection CSV (label, technology, PC1..PCk) plus a JSON sidecar."""
    k = result.projections.shape[1]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "technology", "circuit"] + [f"PC{a + 1}" for a in range(k)])
        for lab, row in zip(labels, result.projections):
            writer.writerow([lab["platform"], lab["technology"], lab["circuit"]]
                            + [repr(float(v)) for v in row])
    payload = result.to_dict()
    payload.update(extra or {})
    Path(json_path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
