"""SWAP-overhead accounting for circuits on restricted connectivity graphs.

The router is deliberately simple: a greedy initial placement followed by
shortest-path SWAP insertion. It is not optimal; it only needs to reproduce
the qualitative cost trend of restricted versus all-to-all connectivity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np

from .circuits import SWAP, Circuit, Gate, qv_circuit_from_seed

HEURISTIC = "greedy-shortest-path"
CNOTS_PER_SU4 = 3
CNOTS_PER_SWAP = 3


@dataclass(frozen=True)
class ConnectivityGraph:
    n_qubits: int
    edges: frozenset
    name: str = "custom"

    def __post_init__(self):
        edges = frozenset(tuple(sorted((int(a), int(b)))) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        for a, b in edges:
            if a == b or not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValueError(f"invalid edge ({a}, {b}) for {self.n_qubits} qubits")

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_qubits))
        g.add_edges_from(self.edges)
        return g

    @cached_property
    def distances(self) -> np.ndarray:
        dist = np.full((self.n_qubits, self.n_qubits), np.inf)
        for src, lengths in nx.all_pairs_shortest_path_length(self.graph):
            for dst, length in lengths.items():
                dist[src, dst] = length
        return dist

    def is_connected(self) -> bool:
        return self.n_qubits == 1 or nx.is_connected(self.graph)

    def is_complete(self) -> bool:
        return len(self.edges) == self.n_qubits * (self.n_qubits - 1) // 2

    def adjacent(self, a: int, b: int) -> bool:
        return tuple(sorted((a, b))) in self.edges

    def degree(self, v: int) -> int:
        return self.graph.degree[v]

    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n_qubits, "edges": sorted(list(e) for e in self.edges)}

    @classmethod
    def from_dict(cls, data: dict) -> "ConnectivityGraph":
        return cls(int(data["n"]), frozenset(tuple(e) for e in data["edges"]), data.get("name", "custom"))

    @classmethod
    def load(cls, path) -> "ConnectivityGraph":
        return cls.from_dict(json.loads(Path(path).read_text()))


def complete_graph(n: int) -> ConnectivityGraph:
    return ConnectivityGraph(n, frozenset((a, b) for a in range(n) for b in range(a + 1, n)), "complete")


def line_graph(n: int) -> ConnectivityGraph:
    return ConnectivityGraph(n, frozenset((k, k + 1) for k in range(n - 1)), "line")


def t_shaped_graph() -> ConnectivityGraph:
    """7-qubit H/T-shaped coupling map in the style of ibmq_casablanca."""
    edges = [(0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6)]
    return ConnectivityGraph(7, frozenset(edges), "t-shaped")


def heavy_hex_fragment() -> ConnectivityGraph:
    """One 12-qubit heavy-hex cell plus a pendant qubit (13 qubits)."""
    edges = [(k, (k + 1) % 12) for k in range(12)] + [(0, 12)]
    return ConnectivityGraph(13, frozenset(edges), "heavy-hex-fragment")


def graph_from_spec(spec, n: int | None = None) -> ConnectivityGraph:
    """Resolve a graph given by name, by ``{name, n, edges}`` dict, or by path."""
    if isinstance(spec, ConnectivityGraph):
        return spec
    if isinstance(spec, dict):
        return ConnectivityGraph.from_dict(spec)
    name = str(spec)
    if name in ("complete", "all-to-all"):
        if n is None:
            raise ValueError("complete graph needs a qubit count")
        return complete_graph(n)
    if name == "line":
        if n is None:
            raise ValueError("line graph needs a qubit count")
        return line_graph(n)
    if name in ("t-shaped", "t", "casablanca"):
        return t_shaped_graph()
    if name == "heavy-hex-fragment":
        return heavy_hex_fragment()
    path = Path(name)
    if path.exists():
        return ConnectivityGraph.load(path)
    raise ValueError(f"unknown connectivity graph {spec!r}")


# --- routing --------------------------------------------------------------

@dataclass
class RoutedCost:
    circuit_label: str
    graph_name: str
    d: int | None
    native_two_qubit_count: int
    swap_count: int
    heuristic: str = HEURISTIC

    @property
    def cnot_equivalent_total(self) -> int:
        return self.native_two_qubit_count + CNOTS_PER_SWAP * self.swap_count


@dataclass
class RoutedCircuit:
    """Physical operation list produced by the router.

    ``ops`` holds ``("gate", index, physical_targets)`` and
    ``("swap", (p, q))`` entries in execution order.
    """

    circuit: Circuit
    graph: ConnectivityGraph
    initial_layout: list[int]
    final_layout: list[int]
    ops: list = field(default_factory=list)

    @property
    def swap_count(self) -> int:
        return sum(1 for op in self.ops if op[0] == "swap")

    def physical_circuit(self) -> Circuit:
        """Circuit on physical qubits with SWAPs as explicit gates.

        Logical qubit ``q`` starts on ``initial_layout[q]`` and ends on
        ``final_layout[q]``.
        """
        gates = []
        for op in self.ops:
            if op[0] == "swap":
                gates.append(Gate(op[1], SWAP, "swap"))
            else:
                g = self.circuit.gates[op[1]]
                gates.append(Gate(op[2], g.matrix, g.name))
        return Circuit(self.graph.n_qubits, gates, label=self.circuit.label,
                       depth_d=self.circuit.depth_d, seed=self.circuit.seed)


def _first_layer_pairs(circuit: Circuit) -> list[tuple[int, int]]:
    busy: set[int] = set()
    pairs = []
    for g in circuit.gates:
        if g.n_targets != 2:
            continue
        a, b = g.targets
        if a in busy or b in busy:
            break
        pairs.append((a, b))
        busy.update((a, b))
    return pairs


def _initial_layout(circuit: Circuit, graph: ConnectivityGraph, rng) -> list[int]:
    n = circuit.n_qubits
    dist = graph.distances
    l2p = [-1] * n
    free = set(range(graph.n_qubits))
    edge_list = sorted(graph.edges)
    order = rng.permutation(len(edge_list)) if rng is not None else range(len(edge_list))
    # co-locate the first layer's pairs on free edges
    for a, b in _first_layer_pairs(circuit):
        for idx in order:
            p, q = edge_list[idx]
            if p in free and q in free:
                l2p[a], l2p[b] = p, q
                free -= {p, q}
                break
    # remaining qubits go next to their earliest already-placed partner
    partners: dict[int, list[int]] = {q: [] for q in range(n)}
    for g in circuit.gates:
        if g.n_targets == 2:
            a, b = g.targets
            partners[a].append(b)
            partners[b].append(a)
    for q in range(n):
        if l2p[q] >= 0:
            continue
        placed = [l2p[p] for p in partners[q] if l2p[p] >= 0]
        candidates = sorted(free)
        if placed:
            target = placed[0]
            best = min(candidates, key=lambda p: (dist[p, target], p))
        else:
            best = candidates[0]
        l2p[q] = best
        free.discard(best)
    return l2p


def route_circuit_ops(circuit: Circuit, graph: ConnectivityGraph, rng=None) -> RoutedCircuit:
    if circuit.n_qubits != graph.n_qubits:
        raise ValueError(
            f"circuit has {circuit.n_qubits} qubits but graph {graph.name!r} has {graph.n_qubits}"
        )
    if not graph.is_connected():
        raise ValueError(f"connectivity graph {graph.name!r} is disconnected")
    l2p = _initial_layout(circuit, graph, rng)
    initial = list(l2p)
    p2l = {p: q for q, p in enumerate(l2p)}
    ops = []
    for index, g in enumerate(circuit.gates):
        if g.n_targets == 1:
            ops.append(("gate", index, (l2p[g.targets[0]],)))
            continue
        a, b = g.targets
        pa, pb = l2p[a], l2p[b]
        if not graph.adjacent(pa, pb):
            # walk the lower-degree endpoint along a shortest path
            if graph.degree(pb) < graph.degree(pa):
                a, b, pa, pb = b, a, pb, pa
            path = nx.shortest_path(graph.graph, pa, pb)
            for step in path[1:-1]:
                here = l2p[a]
                other = p2l.get(step)
                ops.append(("swap", (here, step)))
                l2p[a] = step
                p2l[step] = a
                if other is not None:
                    l2p[other] = here
                    p2l[here] = other
                else:
                    del p2l[here]
            a, b = g.targets
        ops.append(("gate", index, (l2p[a], l2p[b])))
    return RoutedCircuit(circuit, graph, initial, list(l2p), ops)


def route_circuit(circuit: Circuit, graph: ConnectivityGraph, rng=None) -> RoutedCost:
    routed = route_circuit_ops(circuit, graph, rng)
    return RoutedCost(
        circuit_label=circuit.label,
        graph_name=graph.name,
        d=circuit.depth_d,
        native_two_qubit_count=CNOTS_PER_SU4 * len(circuit.two_qubit_gates),
        swap_count=routed.swap_count,
    )


def verify_routing(routed: RoutedCircuit) -> bool:
    """Replay the routed ops with symbolic labels; True if every gate lands right."""
    phys = {p: q for q, p in enumerate(routed.initial_layout)}
    seen = 0
    for op in routed.ops:
        if op[0] == "swap":
            p, q = op[1]
            if not routed.graph.adjacent(p, q):
                return False
            lp, lq = phys.get(p), phys.get(q)
            phys.pop(p, None)
            phys.pop(q, None)
            if lp is not None:
                phys[q] = lp
            if lq is not None:
                phys[p] = lq
            continue
        _, index, targets = op
        if index != seen:
            return False
        seen += 1
        gate = routed.circuit.gates[index]
        if tuple(phys.get(p) for p in targets) != gate.targets:
            return False
        if len(targets) == 2 and not routed.graph.adjacent(*targets):
            return False
    final = {p: q for q, p in enumerate(routed.final_layout)}
    return seen == len(routed.circuit.gates) and final == phys


@dataclass
class CurvePoint:
    d: int
    mean_total: float
    std_total: float
    graph: str


def overhead_curve(n: int, d_values, graph: ConnectivityGraph, trials: int, rng) -> list[CurvePoint]:
    """Mean CNOT-equivalent cost of random QV circuits for each depth."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    points = []
    for d in d_values:
        seeds = rng.integers(0, 2**63, size=trials)
        totals = []
        for s in seeds:
            circuit = qv_circuit_from_seed(n, int(d), int(s))
            cost = route_circuit(circuit, graph, np.random.default_rng(int(s) ^ 0x5A5A))
            totals.append(cost.cnot_equivalent_total)
        totals = np.asarray(totals, dtype=float)
        points.append(CurvePoint(int(d), float(totals.mean()), float(totals.std()), graph.name))
    return points
