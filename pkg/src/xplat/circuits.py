"""Test circuits (GHZ, quantum-volume) and exact statevector evolution.

Conventions used throughout the package:

* qubit 0 is the least-significant bit of a basis-state index;
* bitstrings are written qubit-0-first, so ``s[k]`` is the bit of qubit ``k``;
* a two-qubit gate on ``targets=(a, b)`` has ``a`` as the most significant
  factor of its 4x4 matrix (``CNOT`` on ``(control, target)`` is the usual
  textbook matrix).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNITARY_ATOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
PAULIS = (I2, X, Y, Z)


@dataclass(frozen=True, eq=False)
class Gate:
    """A one- or two-qubit unitary stored as an explicit matrix."""

    targets: tuple[int, ...]
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        matrix = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", matrix)
        if len(targets) not in (1, 2):
            raise ValueError(f"gate must act on 1 or 2 qubits, got {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"gate targets must be distinct, got {targets}")
        dim = 2 ** len(targets)
        if matrix.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got {matrix.shape}")
        dev = np.max(np.abs(matrix.conj().T @ matrix - np.eye(dim)))
        if dev > UNITARY_ATOL:
            raise ValueError(f"gate matrix is not unitary (deviation {dev:.2e})")

    @property
    def kind(self) -> str:
        return "one-qubit-unitary" if len(self.targets) == 1 else "two-qubit-unitary"

    @property
    def n_targets(self) -> int:
        return len(self.targets)


@dataclass(eq=False)
class Circuit:
    """Ordered list of gates preparing a state from ``|0...0>``."""

    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    label: str = ""
    depth_d: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        for g in self.gates:
            if max(g.targets) >= self.n_qubits or min(g.targets) < 0:
                raise ValueError(
                    f"gate targets {g.targets} out of range for {self.n_qubits} qubits"
                )

    def __len__(self):
        return len(self.gates)

    @property
    def two_qubit_gates(self) -> list[Gate]:
        return [g for g in self.gates if g.n_targets == 2]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_qubits": self.n_qubits,
            "seed": self.seed,
            "depth": self.depth_d,
            "gates": [
                {
                    "targets": list(g.targets),
                    "name": g.name,
                    "matrix": [[float(z.real), float(z.imag)] for z in g.matrix.ravel()],
                }
                for g in self.gates
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        gates = []
        for entry in data["gates"]:
            flat = np.array([complex(re, im) for re, im in entry["matrix"]])
            dim = int(round(np.sqrt(flat.size)))
            gates.append(
                Gate(tuple(entry["targets"]), flat.reshape(dim, dim), entry.get("name", ""))
            )
        return cls(
            n_qubits=int(data["n_qubits"]),
            gates=gates,
            label=data.get("label", ""),
            depth_d=data.get("depth"),
            seed=data.get("seed"),
        )

    def dumps(self) -> str:
        # json writes floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "Circuit":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_ghz(n: int) -> Circuit:
    """Hadamard on qubit 0 followed by a CNOT ladder 0->1->...->n-1."""
    if n < 2:
        raise ValueError(f"GHZ circuit needs n >= 2, got {n}")
    gates = [Gate((0,), H, "h")]
    gates += [Gate((k, k + 1), CNOT, "cx") for k in range(n - 1)]
    return Circuit(n, gates, label=f"ghz{n}")


def sample_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of ``0..n-1`` (image array)."""
    if n < 1:
        raise ValueError("permutation size must be >= 1")
    return rng.permutation(n)


def sample_haar_su4(rng: np.random.Generator) -> np.ndarray:
    return sample_haar_unitary(4, rng, special=True)


def sample_haar_unitary(dim: int, rng: np.random.Generator, special: bool = False) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix.

    The phases of R's diagonal are absorbed into Q so the result is Haar
    distributed; with ``special=True`` the global phase is then fixed so that
    ``det U = 1``.
    """
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    q = q * (diag / np.abs(diag))
    if special:
        q = q / np.linalg.det(q) ** (1.0 / dim)
    return q


def sample_qv_circuit(n: int, d: int, rng: np.random.Generator, label: str | None = None,
                      seed: int | None = None) -> Circuit:
    """Quantum-volume circuit: ``d`` layers of permutation + paired SU(4) gates.

    Each layer pairs ``(pi(0), pi(1)), (pi(2), pi(3)), ...`` over the first
    ``2 * (n // 2)`` permuted labels; for odd ``n`` the last label idles.
    """
    if n < 2:
        raise ValueError(f"QV circuit needs n >= 2, got {n}")
    if d < 1:
        raise ValueError(f"QV circuit needs d >= 1, got {d}")
    gates = []
    n_paired = 2 * (n // 2)
    for _ in range(d):
        perm = sample_permutation(n, rng)
        for k in range(0, n_paired, 2):
            gates.append(Gate((int(perm[k]), int(perm[k + 1])), sample_haar_su4(rng), "su4"))
    return Circuit(n, gates, label=label or f"qv{n}d{d}", depth_d=d, seed=seed)


def qv_circuit_from_seed(n: int, d: int, seed: int, label: str | None = None) -> Circuit:
    """Reproducible QV circuit: same ``(n, d, seed)`` gives bit-identical gates."""
    return sample_qv_circuit(n, d, np.random.default_rng(seed), label=label, seed=seed)


# --- tensor helpers -------------------------------------------------------

def apply_matrix(tensor: np.ndarray, matrix: np.ndarray, axes) -> np.ndarray:
    """Contract ``matrix`` into the listed axes of a ``(2,)*m`` tensor.

    ``axes`` follows the matrix's factor order (most significant first).
    """
    k = len(axes)
    op = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def qubit_axis(q: int, n: int) -> int:
    """Axis of qubit ``q`` in a C-order ``(2,)*n`` reshape of a state vector."""
    return n - 1 - q


def apply_local(vec: np.ndarray, mats, n: int) -> np.ndarray:
    """Apply the product ``mats[n-1] (x) ... (x) mats[0]`` to a length-2^n vector.

    ``mats[k]`` acts on qubit ``k``; ``None`` entries are identities.
    """
    t = np.asarray(vec).reshape((2,) * n)
    for q, m in enumerate(mats):
        if m is not None:
            t = apply_matrix(t, np.asarray(m), [qubit_axis(q, n)])
    return t.reshape(-1)


def apply_gate(state: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    t = state.reshape((2,) * n)
    t = apply_matrix(t, gate.matrix, [qubit_axis(q, n) for q in gate.targets])
    return t.reshape(-1)


def zero_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def apply_circuit(circuit: Circuit, state: np.ndarray | None = None) -> np.ndarray:
    """Exact noiseless evolution; defaults to starting from ``|0...0>``."""
    n = circuit.n_qubits
    if state is None:
        state = zero_state(n)
    state = np.asarray(state, dtype=complex)
    if state.shape != (2**n,):
        raise ValueError(f"state has shape {state.shape}, expected ({2**n},)")
    for g in circuit.gates:
        state = apply_gate(state, g, n)
    return state


def permute_qubits(state: np.ndarray, perm, n: int) -> np.ndarray:
    """Relabel qubits: the content of qubit ``perm[k]`` moves to qubit ``k``."""
    t = state.reshape((2,) * n)
    src = [qubit_axis(perm[qubit_axis(a, n)], n) for a in range(n)]
    return np.transpose(t, src).reshape(-1)
