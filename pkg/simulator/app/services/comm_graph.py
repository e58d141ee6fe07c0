"""
Intra-cluster communication graphs and their mixing matrices.

Graphs are undirected, connected and static over a run. Mixing matrices are built with
the Metropolis-Hastings rule, which yields symmetric doubly stochastic weights from local
degree information only.
"""
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import networkx as nx
import numpy as np

from app.core.errors import ConstructionError, UsageError, ValidationReport

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12

GRAPH_PRESETS = ("complete", "ring", "path", "star", "erdos-renyi", "edges")


@dataclass(frozen=True)
class UndirectedGraph:
    node_count: int
    edges: frozenset[frozenset[int]]

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Sequence[int]]) -> "UndirectedGraph":
        if node_count < 1:
            raise ConstructionError("a graph needs at least one node")
        normalized: set[frozenset[int]] = set()
        for edge in edges:
            k, j = (int(v) for v in edge)
            if k == j:
                raise ConstructionError(f"self-loop ({k}, {j}) is not an edge")
            if not (0 <= k < node_count and 0 <= j < node_count):
                raise ConstructionError(f"edge ({k}, {j}) references a node outside [0, {node_count})")
            normalized.add(frozenset((k, j)))
        return cls(node_count=node_count, edges=frozenset(normalized))

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "UndirectedGraph":
        mapping = {node: idx for idx, node in enumerate(sorted(graph.nodes))}
        return cls.from_edges(graph.number_of_nodes(), ((mapping[u], mapping[v]) for u, v in graph.edges))

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(tuple(edge) for edge in self.edges)
        return graph

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=int)
        for edge in self.edges:
            for node in edge:
                deg[node] += 1
        return deg

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(edge)) for edge in self.edges)


@dataclass(frozen=True)
class MixingMatrix:
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def preset_graph(name: str, node_count: int, p: float = 0.5, seed: int = 0, max_tries: int = 1000) -> UndirectedGraph:
    """Named topology on node_count nodes."""
    if node_count < 1:
        raise ConstructionError("a graph needs at least one node")
    if name == "complete":
        graph = nx.complete_graph(node_count)
    elif name == "ring":
        graph = nx.cycle_graph(node_count) if node_count > 2 else nx.path_graph(node_count)
    elif name == "path":
        graph = nx.path_graph(node_count)
    elif name == "star":
        graph = nx.star_graph(node_count - 1) if node_count > 1 else nx.empty_graph(1)
    elif name == "erdos-renyi":
        graph = random_connected_graph(node_count, p, seed, max_tries).to_networkx()
    else:
        raise ConstructionError(f"unknown graph preset '{name}' (choose from {', '.join(GRAPH_PRESETS)})")
    return UndirectedGraph.from_networkx(graph)


def random_connected_graph(node_count: int, p: float, seed: int, max_tries: int = 1000) -> UndirectedGraph:
    """G(n, p) resampled until connected."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        graph = nx.gnp_random_graph(node_count, p, seed=int(rng.integers(2**31 - 1)))
        if nx.is_connected(graph):
            return UndirectedGraph.from_networkx(graph)
    raise ConstructionError(f"no connected G({node_count}, {p}) sample after {max_tries} tries")


def build_metropolis_weights(g: UndirectedGraph) -> MixingMatrix:
    """w_kj = 1 / (1 + max(deg k, deg j)) on edges; self-loops take the residual."""
    if not g.is_connected():
        raise ConstructionError(f"communication graph on {g.node_count} nodes is not connected")
    deg = g.degrees()
    weights = np.zeros((g.node_count, g.node_count))
    for k, j in g.sorted_edges():
        w = 1.0 / (1.0 + max(deg[k], deg[j]))
        weights[k, j] = weights[j, k] = w
    np.fill_diagonal(weights, 1.0 - weights.sum(axis=1))
    return MixingMatrix(weights=weights)


def mix(W: MixingMatrix, states: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    """Row j of the result is sum_l w_jl states[l]."""
    arr = np.asarray(states, dtype=float)
    if arr.ndim != 2 or arr.shape != (W.size, W.size):
        raise UsageError(f"expected {W.size} agent states of length {W.size}, got array of shape {arr.shape}")
    return W.weights @ arr


def validate_mixing(W: MixingMatrix, g: UndirectedGraph, tol: float = STOCHASTIC_TOL) -> ValidationReport:
    """Every violated mixing-matrix invariant: shape, sign, sparsity, stochasticity, symmetry."""
    report = ValidationReport(subject="mixing matrix")
    weights = np.asarray(W.weights, dtype=float)
    n = g.node_count
    if weights.shape != (n, n):
        report.add("shape", f"matrix shape {weights.shape} does not match graph size {n}")
        return report
    if np.any(weights < 0):
        report.add("nonnegativity", "matrix has negative entries")
    adjacency = np.zeros((n, n), dtype=bool)
    for k, j in g.sorted_edges():
        adjacency[k, j] = adjacency[j, k] = True
    off_diagonal = ~np.eye(n, dtype=bool)
    positive = weights > 0
    if np.any(positive & ~adjacency & off_diagonal):
        report.add("sparsity", "positive weight on a pair that is not an edge")
    if np.any(~positive & adjacency):
        report.add("sparsity", "edge carries a non-positive weight")
    if np.any(np.diag(weights) <= 0):
        report.add("self-loop", "diagonal entry is not positive")
    row_err = np.max(np.abs(weights.sum(axis=1) - 1.0))
    if row_err > tol:
        report.add("row-stochastic", f"row sums deviate from 1 by {row_err:.3e}")
    col_err = np.max(np.abs(weights.sum(axis=0) - 1.0))
    if col_err > tol:
        report.add("column-stochastic", f"column sums deviate from 1 by {col_err:.3e}")
    if np.max(np.abs(weights - weights.T)) > tol:
        report.add("symmetry", "matrix is not symmetric")
    if not g.is_connected():
        report.add("connectivity", "communication graph is not connected")
    return report
