"""Undirected communication graphs and their spectral quantities."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n_nodes-1``.

    Edges are stored as sorted ``(i, j)`` pairs with ``i < j``; use
    :func:`build_graph` to construct one from an arbitrary edge list.
    """

    n_nodes: int
    edges: frozenset = field(default_factory=frozenset)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def degree(self, i: int) -> int:
        return sum(1 for a, b in self.edges if a == i or b == i)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges


@dataclass(frozen=True)
class SpectralSummary:
    lambda_max: float
    v_plus: np.ndarray
    lambda_min: float
    v_minus: np.ndarray


def build_graph(n: int, edges) -> Graph:
    """Build a :class:`Graph`, rejecting self loops and out-of-range nodes."""
    if n < 0:
        raise ValueError(f"node count must be nonnegative, got {n}")
    norm = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for {n} nodes")
        if i == j:
            raise ValueError(f"self loop at node {i}")
        norm.add((min(i, j), max(i, j)))
    return Graph(n, frozenset(norm))


def complete_graph(n: int) -> Graph:
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


def from_adjacency(a) -> Graph:
    a = np.asarray(a)
    n = a.shape[0]
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n) if a[i, j]])


def is_connected(g: Graph) -> bool:
    """Breadth-first reachability from node 0. The empty graph counts as connected."""
    if g.n_nodes <= 1:
        return True
    adj = [[] for _ in range(g.n_nodes)]
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == g.n_nodes


def adjacency_and_laplacian(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    # integer arithmetic first so that L @ 1 == 0 exactly
    a = np.zeros((g.n_nodes, g.n_nodes), dtype=np.int64)
    for i, j in g.edges:
        a[i, j] = a[j, i] = 1
    lap = np.diag(a.sum(axis=1)) - a
    return a.astype(float), lap.astype(float)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def spectral_summary(g: Graph) -> SpectralSummary:
    """Extremal eigenpairs of the adjacency matrix of a connected graph.

    ``v_plus`` is the Perron vector (all entries positive); ``v_minus`` has its
    first nonzero entry positive. Both have unit 2-norm.
    """
    if g.n_nodes == 0:
        raise ValueError("empty graph has no spectrum")
    if not is_connected(g):
        raise ValueError("spectral summary requires a connected graph")
    a, _ = adjacency_and_laplacian(g)
    w, vecs = np.linalg.eigh(a)
    v_plus = _fix_sign(vecs[:, -1])
    v_plus = v_plus / np.linalg.norm(v_plus)
    if g.n_nodes > 1 and not np.all(v_plus > 0):
        raise ArithmeticError("Perron vector is not strictly positive")
    v_minus = _fix_sign(vecs[:, 0])
    v_minus = v_minus / np.linalg.norm(v_minus)
    return SpectralSummary(float(w[-1]), v_plus, float(w[0]), v_minus)


def min_eigenspace(g: Graph, tol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Smallest adjacency eigenvalue with an orthonormal basis (columns) of its eigenspace."""
    a, _ = adjacency_and_laplacian(g)
    w, vecs = np.linalg.eigh(a)
    mask = np.abs(w - w[0]) <= tol
    basis = np.column_stack([_fix_sign(vecs[:, k]) for k in np.flatnonzero(mask)])
    return float(w[0]), basis
