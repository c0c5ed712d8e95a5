"""Undirected communication graphs, orientations and incidence algebra.

Nodes are 0-indexed. A graph is oriented by assigning each edge an initial
node (+1 in the incidence row) and a terminal node (-1). The Laplacian of
the undirected graph equals ``Q.T @ Q`` for every orientation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "UndirectedGraph",
    "OrientedIncidence",
    "build_graph",
    "path_graph",
    "cycle_graph",
    "is_connected",
    "orient",
    "laplacian",
    "adjacency",
    "apply_incidence",
    "apply_incidence_transpose",
]


@dataclass(frozen=True)
class UndirectedGraph:
    """Simple undirected graph with canonically ordered edges."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(
                    f"edge ({i}, {j}) has a node index outside [0, {self.n_nodes})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class OrientedIncidence:
    """Edge-by-node incidence matrix of an oriented graph.

    Row ``k`` holds +1 at the initial node of edge ``k`` and -1 at its
    terminal node. ``entries`` is stored read-only.
    """

    n_nodes: int
    n_edges: int
    entries: np.ndarray

    def __post_init__(self):
        q = np.array(self.entries, dtype=np.int64).reshape(self.n_edges, self.n_nodes)
        for k, row in enumerate(q):
            if (np.count_nonzero(row == 1) != 1 or np.count_nonzero(row == -1) != 1
                    or np.count_nonzero(row) != 2):
                raise ValueError(f"incidence row {k} must hold exactly one +1 and one -1")
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)

    def __eq__(self, other):
        if not isinstance(other, OrientedIncidence):
            return NotImplemented
        return (self.n_nodes == other.n_nodes and self.n_edges == other.n_edges
                and np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash((self.n_nodes, self.n_edges, self.entries.tobytes()))

    def endpoints(self, k: int) -> tuple[int, int]:
        """(initial, terminal) node of edge ``k``."""
        row = self.entries[k]
        return int(np.flatnonzero(row == 1)[0]), int(np.flatnonzero(row == -1)[0])

    def graph(self) -> UndirectedGraph:
        """The underlying undirected graph (orientation forgotten)."""
        return build_graph(self.n_nodes, [self.endpoints(k) for k in range(self.n_edges)])


def build_graph(n_nodes: int, edges: Iterable[Sequence[int]]) -> UndirectedGraph:
    """Build a graph, deduplicating unordered pairs and sorting edges.

    Each edge is stored as ``(min, max)``; the edge list is sorted
    lexicographically. Self-loops and out-of-range indices raise
    ``ValueError``.
    """
    n_nodes = int(n_nodes)
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    canon = set()
    for pair in edges:
        pair = tuple(pair)
        if len(pair) != 2:
            raise ValueError(f"edge {pair!r} is not a node pair")
        i, j = int(pair[0]), int(pair[1])
        if i == j:
            raise ValueError(f"self-loop at node {i}")
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ValueError(f"edge ({i}, {j}) has a node index outside [0, {n_nodes})")
        canon.add((min(i, j), max(i, j)))
    return UndirectedGraph(n_nodes, tuple(sorted(canon)))


def path_graph(n_nodes: int) -> UndirectedGraph:
    return build_graph(n_nodes, [(i, i + 1) for i in range(n_nodes - 1)])


def cycle_graph(n_nodes: int) -> UndirectedGraph:
    if n_nodes < 3:
        raise ValueError("a cycle needs at least 3 nodes")
    return build_graph(n_nodes, [(i, (i + 1) % n_nodes) for i in range(n_nodes)])


def is_connected(g: UndirectedGraph) -> bool:
    """Breadth-first reachability from node 0."""
    neighbours = [[] for _ in range(g.n_nodes)]
    for i, j in g.edges:
        neighbours[i].append(j)
        neighbours[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in neighbours[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == g.n_nodes


def orient(g: UndirectedGraph, directions: Sequence[bool] | None = None) -> OrientedIncidence:
    """Incidence matrix of an orientation of ``g``.

    By default every edge points from its smaller-index node to its
    larger-index node. ``directions[k] = True`` flips edge ``k``.
    """
    if directions is not None and len(directions) != g.n_edges:
        raise ValueError(
            f"directions has length {len(directions)}, graph has {g.n_edges} edges")
    q = np.zeros((g.n_edges, g.n_nodes), dtype=np.int64)
    for k, (i, j) in enumerate(g.edges):
        sign = -1 if directions is not None and directions[k] else 1
        q[k, i] = sign
        q[k, j] = -sign
    return OrientedIncidence(g.n_nodes, g.n_edges, q)


def adjacency(g: UndirectedGraph) -> np.ndarray:
    a = np.zeros((g.n_nodes, g.n_nodes), dtype=np.int64)
    for i, j in g.edges:
        a[i, j] = a[j, i] = 1
    return a


def laplacian(g: UndirectedGraph) -> np.ndarray:
    """Graph Laplacian ``D - A`` as an integer matrix."""
    a = adjacency(g)
    return np.diag(a.sum(axis=1)) - a


def apply_incidence(Q: OrientedIncidence, m: int, v) -> np.ndarray:
    """Compute ``(Q kron I_m) v`` blockwise.

    Block ``k`` of the result is ``sum_j q_kj * v_j`` where ``v_j`` is the
    ``j``-th length-``m`` block of ``v``.
    """
    v = np.asarray(v, dtype=float)
    if m < 1 or v.shape != (Q.n_nodes * m,):
        raise ValueError(f"expected a vector of length {Q.n_nodes * m}, got shape {v.shape}")
    return (Q.entries @ v.reshape(Q.n_nodes, m)).ravel()


def apply_incidence_transpose(Q: OrientedIncidence, m: int, w) -> np.ndarray:
    """Compute ``(Q.T kron I_m) w`` blockwise."""
    w = np.asarray(w, dtype=float)
    if m < 1 or w.shape != (Q.n_edges * m,):
        raise ValueError(f"expected a vector of length {Q.n_edges * m}, got shape {w.shape}")
    return (Q.entries.T @ w.reshape(Q.n_edges, m)).ravel()
