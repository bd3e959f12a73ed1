"""Emulated noisy platforms and exact density-matrix oracles.

Noise model: after every gate a depolarizing channel acts on the gate's
support, ``rho -> (1 - p) rho + p * (I/d (x) tr_S rho)``. Equivalently, with
probability ``p * (1 - 4**-k)`` a uniformly random non-identity Pauli hits
the ``k`` qubits of the gate; the trajectory sampler uses that unraveling so
its average reproduces the density-matrix channel exactly. Readout flips are
not part of the state; they are applied when shots are drawn.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import circuits as qc
from .errors import CapacityError, UndefinedValueError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DM_MAX_QUBITS = 8
TRAJECTORY_MAX_QUBITS = 13
TECHNOLOGIES = ("trapped-ion", "superconducting", "simulation")


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 0.0
    p2: float = 0.0
    readout_eps: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2", "readout_eps"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} is not a probability")

    def gate_probability(self, n_targets: int) -> float:
        return self.p1 if n_targets == 1 else self.p2

    def is_noiseless(self) -> bool:
        return self.p1 == 0 and self.p2 == 0 and self.readout_eps == 0


@dataclass(frozen=True)
class PlatformProfile:
    name: str
    technology: str = "simulation"
    noise: NoiseModel = NoiseModel()
    connectivity: object = "complete"

    def __post_init__(self):
        if self.technology not in TECHNOLOGIES:
            raise ValueError(f"unknown technology {self.technology!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "technology": self.technology, **asdict(self.noise),
                "connectivity": self.connectivity}

    @classmethod
    def from_dict(cls, data: dict) -> "PlatformProfile":
        noise = NoiseModel(float(data.get("p1", 0.0)), float(data.get("p2", 0.0)),
                           float(data.get("readout_eps", 0.0)))
        return cls(str(data["name"]), data.get("technology", "simulation"), noise,
                   data.get("connectivity", "complete"))


def load_profile(path) -> PlatformProfile:
    """Read a profile from a ``.json`` or ``.toml`` file."""
    path = Path(path)
    text = path.read_text()
    data = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    return PlatformProfile.from_dict(data)


def preset_names() -> list[str]:
    files = resources.files("xplat").joinpath("presets").iterdir()
    return sorted(f.name.rsplit(".", 1)[0] for f in files if f.name.endswith(".json"))


def load_preset(name: str) -> PlatformProfile:
    entry = resources.files("xplat").joinpath("presets").joinpath(f"{name}.json")
    if not entry.is_file():
        raise ValueError(f"no preset named {name!r}; available: {preset_names()}")
    return PlatformProfile.from_dict(json.loads(entry.read_text()))


# --- density matrices -----------------------------------------------------

@dataclass(eq=False)
class DensityMatrix:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        dim = 2**self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"density matrix shape {self.matrix.shape} != ({dim}, {dim})")

    @classmethod
    def from_state(cls, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        n = int(round(np.log2(psi.size)))
        return cls(n, np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityMatrix":
        return cls(n, np.eye(2**n) / 2**n)

    def purity(self) -> float:
        return exact_overlap(self, self)

    def check(self, atol: float = 1e-10) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > atol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > atol:
            raise ValueError("density matrix trace is not 1")
        if np.min(np.linalg.eigvalsh(m)) < -1e-9:
            raise ValueError("density matrix has negative eigenvalues")

    def partial_trace(self, keep) -> "DensityMatrix":
        """Reduced state on qubits ``keep`` (returned in the listed order)."""
        n = self.n_qubits
        keep = [int(k) for k in keep]
        t = self.matrix.reshape((2,) * (2 * n))
        drop = [q for q in range(n) if q not in keep]
        letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
        rows = [letters[q] for q in range(n)]
        cols = [letters[n + q] for q in range(n)]
        for q in drop:
            cols[q] = rows[q]
        # C-order axes run from qubit n-1 down to qubit 0
        src = "".join(reversed(rows)) + "".join(reversed(cols))
        out_rows = "".join(rows[q] for q in reversed(keep))
        out_cols = "".join(cols[q] for q in reversed(keep))
        reduced = np.einsum(f"{src}->{out_rows}{out_cols}", t)
        k = len(keep)
        return DensityMatrix(k, reduced.reshape(2**k, 2**k))


def _apply_to_dm(t: np.ndarray, matrix: np.ndarray, targets, n: int) -> np.ndarray:
    row_axes = [qc.qubit_axis(q, n) for q in targets]
    col_axes = [n + a for a in row_axes]
    t = qc.apply_matrix(t, matrix, row_axes)
    return qc.apply_matrix(t, matrix.conj(), col_axes)


def _pauli_product(index: int, k: int) -> np.ndarray:
    if k == 1:
        return qc.PAULIS[index]
    return np.kron(qc.PAULIS[index // 4], qc.PAULIS[index % 4])


def _depolarize(t: np.ndarray, targets, p: float, n: int) -> np.ndarray:
    if p == 0:
        return t
    k = len(targets)
    total = (1 - p) * t
    weight = p / 4**k
    for index in range(4**k):
        total = total + weight * _apply_to_dm(t, _pauli_product(index, k), targets, n)
    return total


def simulate_density_matrix(circuit: qc.Circuit, noise: NoiseModel,
                            max_qubits: int = DM_MAX_QUBITS) -> DensityMatrix:
    """Exact noisy state: each gate followed by depolarizing on its support."""
    n = circuit.n_qubits
    if n > max_qubits:
        raise CapacityError(
            f"{n} qubits exceeds the density-matrix cap of {max_qubits}; "
            "use the trajectory simulator instead"
        )
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1.0
    t = rho.reshape((2,) * (2 * n))
    for g in circuit.gates:
        t = _apply_to_dm(t, g.matrix, g.targets, n)
        t = _depolarize(t, g.targets, noise.gate_probability(g.n_targets), n)
    return DensityMatrix(n, t.reshape(2**n, 2**n))


# --- trajectories ---------------------------------------------------------

def insertion_probability(p: float, k: int) -> float:
    """Probability that a non-identity Pauli is inserted after a ``k``-qubit gate."""
    return p * (1 - 4.0**-k)


def sample_error_patterns(circuit: qc.Circuit, noise: NoiseModel, rng: np.random.Generator,
                          shots: int) -> np.ndarray:
    """``(shots, n_gates)`` array; 0 = no error, else the inserted Pauli index."""
    n_gates = len(circuit.gates)
    patterns = np.zeros((shots, n_gates), dtype=np.int64)
    if n_gates == 0:
        return patterns
    ks = np.array([g.n_targets for g in circuit.gates])
    probs = np.array([insertion_probability(noise.gate_probability(k), k) for k in ks])
    hit = rng.random((shots, n_gates)) < probs
    # uniform over the 4**k - 1 non-identity Paulis
    which = 1 + np.floor(rng.random((shots, n_gates)) * (4**ks - 1)).astype(np.int64)
    patterns[hit] = which[hit]
    return patterns


def trajectory_state(circuit: qc.Circuit, pattern) -> np.ndarray:
    """Pure state of one trajectory given its error pattern."""
    n = circuit.n_qubits
    psi = qc.zero_state(n)
    for g, err in zip(circuit.gates, pattern):
        psi = qc.apply_gate(psi, g, n)
        if err:
            psi = qc.apply_gate(psi, qc.Gate(g.targets, _pauli_product(int(err), g.n_targets)), n)
    return psi


def simulate_trajectory_shot(circuit: qc.Circuit, noise: NoiseModel, rng: np.random.Generator,
                             max_qubits: int = TRAJECTORY_MAX_QUBITS) -> np.ndarray:
    """One stochastic unraveling of the noisy circuit."""
    if circuit.n_qubits > max_qubits:
        raise CapacityError(
            f"{circuit.n_qubits} qubits exceeds the trajectory cap of {max_qubits}"
        )
    pattern = sample_error_patterns(circuit, noise, rng, 1)[0]
    return trajectory_state(circuit, pattern)


# --- exact figures of merit ----------------------------------------------

def exact_overlap(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.matrix.shape != b.matrix.shape:
        raise ValueError(f"dimension mismatch: {a.matrix.shape} vs {b.matrix.shape}")
    # for Hermitian A, B: tr[AB] = sum_ij Re A_ij Re B_ij + Im A_ij Im B_ij,
    # which is bitwise symmetric in A and B
    x, y = a.matrix, b.matrix
    return float(np.sum(x.real * y.real + x.imag * y.imag))


def exact_fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    pa, pb = exact_overlap(a, a), exact_overlap(b, b)
    if pa <= 0 or pb <= 0:
        raise UndefinedValueError("fidelity undefined for zero purity", purity_a=pa, purity_b=pb)
    return exact_overlap(a, b) / np.sqrt(pa * pb)


# --- platform-level emulation ---------------------------------------------

def compile_for_platform(circuit: qc.Circuit, profile: PlatformProfile):
    """Route ``circuit`` onto the platform's connectivity.

    Returns ``(physical_circuit, final_layout)``; ``final_layout[q]`` is the
    physical qubit holding logical qubit ``q`` at the end. All-to-all
    platforms get the circuit back unchanged with the identity layout.
    """
    from .route import graph_from_spec, route_circuit_ops

    graph = graph_from_spec(profile.connectivity, circuit.n_qubits)
    if graph.is_complete():
        return circuit, list(range(circuit.n_qubits))
    routed = route_circuit_ops(circuit, graph)
    # logical q starts on initial_layout[q]; relabel so that the prepared
    # register is read out in logical order
    phys = routed.physical_circuit()
    init = routed.initial_layout
    inverse = {p: q for q, p in enumerate(init)}
    gates = [qc.Gate(tuple(inverse[t] for t in g.targets), g.matrix, g.name) for g in phys.gates]
    final = [inverse[p] for p in routed.final_layout]
    return qc.Circuit(circuit.n_qubits, gates, circuit.label, circuit.depth_d, circuit.seed), final


def permute_density_matrix(rho: DensityMatrix, perm) -> DensityMatrix:
    n = rho.n_qubits
    t = rho.matrix.reshape((2,) * (2 * n))
    src = [qc.qubit_axis(perm[qc.qubit_axis(a, n)], n) for a in range(n)]
    t = np.transpose(t, src + [n + s for s in src])
    return DensityMatrix(n, t.reshape(2**n, 2**n))


def apply_readout_equivalent(rho: DensityMatrix, readout_eps: float) -> DensityMatrix:
    """Fold symmetric readout flips into the state.

    For Pauli-basis measurements a flip with probability ``eps`` scales every
    single-qubit X, Y and Z expectation by ``1 - 2 eps``, which is exactly a
    depolarizing channel with ``p = 2 eps`` on each qubit.
    """
    if readout_eps == 0:
        return rho
    n = rho.n_qubits
    t = rho.matrix.reshape((2,) * (2 * n))
    for q in range(n):
        t = _depolarize(t, (q,), 2 * readout_eps, n)
    return DensityMatrix(n, t.reshape(2**n, 2**n))


def platform_density_matrix(profile: PlatformProfile, circuit: qc.Circuit,
                            max_qubits: int = DM_MAX_QUBITS,
                            include_readout: bool = False) -> DensityMatrix:
    """Exact state the emulated platform prepares.

    With ``include_readout=True`` the readout flips are folded in, giving the
    state whose Pauli-basis statistics the platform's datasets reproduce;
    this is the oracle the estimators converge to.
    """
    physical, final = compile_for_platform(circuit, profile)
    rho = simulate_density_matrix(physical, profile.noise, max_qubits)
    if final != list(range(circuit.n_qubits)):
        rho = permute_density_matrix(rho, final)
    if include_readout:
        rho = apply_readout_equivalent(rho, profile.noise.readout_eps)
    return rho
