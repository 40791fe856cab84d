"""Communication topology, incidence/Laplacian matrices, and consensus coordination.

Edges are stored with the orientation i < j, which fixes the incidence
matrix D (row i gets +1, row j gets -1 for edge (i, j)).  Any consistent
orientation yields the same Laplacian L = D D^T.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingNeighborError


class CommGraph:
    """Undirected, connected communication graph over robots 0..N-1."""

    def __init__(self, n_nodes: int, edges: Sequence[tuple]):
        if n_nodes < 1:
            raise ValueError("graph needs at least one node")
        norm = []
        seen = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop ({i},{j}) not allowed")
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise ValueError(f"edge ({i},{j}) out of range for {n_nodes} nodes")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
            norm.append((i, j))
        self.n_nodes = n_nodes
        self.edges = tuple(norm)
        if not self._connected():
            raise ValueError("communication graph must be connected")
        nbrs = [[] for _ in range(n_nodes)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        self._neighbors = tuple(tuple(sorted(ns)) for ns in nbrs)
        self._edge_index = {e: idx for idx, e in enumerate(self.edges)}

    def _connected(self) -> bool:
        # union-find; connectivity is a hard precondition for convergence
        parent = list(range(self.n_nodes))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.edges:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
        return len({find(i) for i in range(self.n_nodes)}) == 1

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> tuple:
        return self._neighbors[i]

    def degree(self, i: int) -> int:
        return len(self._neighbors[i])

    def incidence(self) -> np.ndarray:
        """Oriented incidence matrix D, shape (N, |E|)."""
        D = np.zeros((self.n_nodes, self.n_edges))
        for idx, (i, j) in enumerate(self.edges):
            D[i, idx] = 1.0
            D[j, idx] = -1.0
        return D

    def laplacian(self) -> np.ndarray:
        """L = D D^T: symmetric PSD, row sums zero, rank N-1 when connected."""
        D = self.incidence()
        return D @ D.T

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_nodes, self.n_nodes))
        for i, j in self.edges:
            A[i, j] = 1.0
            A[j, i] = 1.0
        return A

    def edge_index(self, i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        try:
            return self._edge_index[key]
        except KeyError:
            raise KeyError(f"({i},{j}) is not an edge") from None


def cycle_graph(n: int) -> CommGraph:
    if n == 1:
        return CommGraph(1, [])
    edges = [(i, i + 1) for i in range(n - 1)]
    if n > 2:
        edges.append((0, n - 1))
    return CommGraph(n, edges)


def path_graph(n: int) -> CommGraph:
    return CommGraph(n, [(i, i + 1) for i in range(n - 1)])


def complete_graph(n: int) -> CommGraph:
    return CommGraph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


@dataclass(frozen=True)
class OffsetSpec:
    """Desired relative parameter offsets, one per oriented edge.

    delta = D^T w_star, so for edge (i, j) with i < j the stored value is
    w_star[i] - w_star[j].
    """

    w_star: np.ndarray
    delta: np.ndarray

    @classmethod
    def from_reference(cls, graph: CommGraph, w_star: Sequence[float]) -> "OffsetSpec":
        w_star = np.asarray(w_star, dtype=float)
        if w_star.shape != (graph.n_nodes,):
            raise ValueError("w_star length must equal the node count")
        delta = graph.incidence().T @ w_star
        return cls(w_star=w_star, delta=delta)

    def directed(self, graph: CommGraph, i: int, j: int) -> float:
        """Offset Delta_ij as seen from node i toward neighbor j."""
        idx = graph.edge_index(i, j)
        return float(self.delta[idx]) if i < j else -float(self.delta[idx])


def coordination_local(graph: CommGraph, offsets: OffsetSpec, i: int, w_i: float,
                       neighbor_w: Mapping[int, float]) -> float:
    """Consensus feedback for one robot from its own w and neighbor values.

    c_i = -sum_{j in N_i} (w_i - w_j - Delta_ij).  A neighbor missing from
    ``neighbor_w`` models a dropped message and raises; the caller decides
    the policy.
    """
    total = 0.0
    for j in graph.neighbors(i):
        try:
            w_j = neighbor_w[j]
        except KeyError:
            raise MissingNeighborError(
                f"robot {i} has no communicated value for neighbor {j}") from None
        total += w_i - w_j - offsets.directed(graph, i, j)
    return -total


def coordination(graph: CommGraph, offsets: OffsetSpec, w: Sequence[float]) -> np.ndarray:
    """Stacked consensus feedback c(w); componentwise equal to -L (w - w_star)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (graph.n_nodes,):
        raise ValueError("w length must equal the node count")
    view = {j: w[j] for j in range(graph.n_nodes)}
    return np.array([
        coordination_local(graph, offsets, i, float(w[i]), view)
        for i in range(graph.n_nodes)
    ])
