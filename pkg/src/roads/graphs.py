"""Graph structures, random DAG generators and acyclicity utilities.

Adjacency convention throughout the package: ``adjacency[i, j] == 1``
means an edge from node i to node j.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GraphStructureError


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class Dag:
    """A binary directed acyclic graph."""

    adjacency: np.ndarray = field()

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphStructureError("adjacency must be square")
        if not np.isin(adj, (0, 1)).all():
            raise GraphStructureError("adjacency entries must be 0 or 1")
        if np.trace(adj) != 0:
            raise GraphStructureError("adjacency must have zero diagonal")
        adj = adj.astype(np.int8)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        if not is_acyclic(adj):
            raise GraphStructureError("graph contains a directed cycle")

    @property
    def n_v(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.adjacency)
        return list(zip(rows.tolist(), cols.tolist()))


def is_acyclic(matrix: np.ndarray, tol: float = 0.0) -> bool:
    """True iff the support graph {|entry| > tol} has no directed cycle.

    Kahn's algorithm on the thresholded support; works for binary and
    weighted matrices alike.
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise GraphStructureError("matrix must be square")
    support = np.abs(m) > tol
    n = support.shape[0]
    indeg = support.sum(axis=0)
    queue = [j for j in range(n) if indeg[j] == 0]
    seen = 0
    while queue:
        i = queue.pop()
        seen += 1
        for j in np.nonzero(support[i])[0]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(int(j))
    return seen == n


def topological_order(dag: Dag) -> list[int]:
    """Node permutation with every edge going from earlier to later position."""
    adj = dag.adjacency
    n = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    queue = [j for j in range(n) if indeg[j] == 0]
    order: list[int] = []
    while queue:
        i = queue.pop()
        order.append(i)
        for j in np.nonzero(adj[i])[0]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(int(j))
    if len(order) != n:
        raise GraphStructureError("input graph is cyclic")
    return order


def generate_er(n_v: int, k: float, rng: np.random.Generator) -> Dag:
    """Erdos-Renyi style DAG with exactly round(k * n_v) edges.

    Edges are sampled uniformly among ordered pairs admissible under a
    uniformly random topological permutation, so the edge count is exact
    rather than Bernoulli-expected.
    """
    if n_v < 2:
        raise ConfigurationError("need at least 2 nodes")
    n_edges = round_half_up(k * n_v)
    max_edges = n_v * (n_v - 1) // 2
    if n_edges < 1 or n_edges > max_edges:
        raise ConfigurationError(
            f"edge budget {n_edges} outside (0, {max_edges}] for {n_v} nodes"
        )
    perm = rng.permutation(n_v)
    pairs = [(i, j) for i in range(n_v) for j in range(i + 1, n_v)]
    chosen = rng.choice(len(pairs), size=n_edges, replace=False)
    adj = np.zeros((n_v, n_v), dtype=np.int8)
    for idx in chosen:
        a, b = pairs[idx]
        adj[perm[a], perm[b]] = 1
    return Dag(adj)


def generate_sf(n_v: int, k: int, rng: np.random.Generator) -> Dag:
    """Scale-free DAG via Barabasi-Albert preferential attachment.

    Each new node attaches to k existing nodes chosen proportionally to
    their current degree; edges are oriented from earlier to later nodes,
    which makes the graph acyclic by construction.
    """
    k = int(k)
    if k < 1 or k >= n_v:
        raise ConfigurationError("need n_v > k >= 1")
    adj = np.zeros((n_v, n_v), dtype=np.int8)
    degree = np.zeros(n_v)
    # Seed core: first k nodes, no internal edges; attachment is
    # degree-proportional with +1 smoothing so the core is reachable.
    for t in range(k, n_v):
        weights = degree[:t] + 1.0
        targets = rng.choice(t, size=k, replace=False, p=weights / weights.sum())
        for s in targets:
            adj[s, t] = 1
            degree[s] += 1
            degree[t] += 1
    return Dag(adj)


def save_adjacency_csv(matrix: np.ndarray, path) -> None:
    """Dense CSV with header row V0..V{n-1}."""
    m = np.asarray(matrix)
    header = ",".join(f"V{j}" for j in range(m.shape[1]))
    if np.issubdtype(m.dtype, np.integer):
        np.savetxt(path, m, fmt="%d", delimiter=",", header=header, comments="")
    else:
        np.savetxt(path, m, fmt="%.17g", delimiter=",", header=header, comments="")


def load_adjacency_csv(path, dtype=float) -> np.ndarray:
    from .io import read_matrix_csv

    return read_matrix_csv(path, dtype=dtype)


def save_edge_list(dag: Dag, path) -> None:
    """Text format: one edge per line as "i j"."""
    with open(path, "w") as fh:
        for i, j in dag.edges():
            fh.write(f"{i} {j}\n")


def load_edge_list(path, n_v: int) -> Dag:
    adj = np.zeros((n_v, n_v), dtype=np.int8)
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j = (int(tok) for tok in line.split())
            adj[i, j] = 1
    return Dag(adj)
