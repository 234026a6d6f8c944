"""Penalty graphs and their trail decomposition.

A graph over the M voxels is stored as a canonical edge list; column j of the
implied signed incidence matrix D (shape M x m) carries +1 at the smaller
endpoint and -1 at the larger, so ``D^T v`` lists the per-edge differences
that the total-variation penalty sums.  Orientation never matters to the
penalty, which is why the canonical form is safe.

The fused-lasso engine wants the edge set split into trails: walks that
repeat no edge.  Odd-degree vertices are paired up with temporary virtual
edges, one Eulerian circuit per connected component is extracted, and cutting
the circuits at the virtual edges leaves trails that cover every real edge
exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse

from .exceptions import ShapeMismatchError


class IncidenceGraph:
    """Undirected simple graph on ``num_nodes`` vertices.

    Parameters
    ----------
    num_nodes : int
    edges : array-like, shape (m, 2)
        Vertex pairs, any orientation; stored with the smaller index first.
        Self-loops and duplicate edges (in either orientation) are rejected.
    """

    def __init__(self, num_nodes: int, edges):
        num_nodes = int(num_nodes)
        if num_nodes < 1:
            raise ValueError(f"num_nodes must be >= 1, got {num_nodes}")
        e = np.asarray(edges, dtype=np.int64)
        if e.size == 0:
            e = np.empty((0, 2), dtype=np.int64)
        if e.ndim != 2 or e.shape[1] != 2:
            raise ShapeMismatchError(f"edges must be (m, 2), got {e.shape}")
        if e.size:
            if e.min() < 0 or e.max() >= num_nodes:
                raise ValueError("edge endpoint out of range")
            lo = np.minimum(e[:, 0], e[:, 1])
            hi = np.maximum(e[:, 0], e[:, 1])
            if (lo == hi).any():
                raise ValueError("self-loops are not allowed")
            e = np.column_stack([lo, hi])
            if len(np.unique(e, axis=0)) != len(e):
                raise ValueError("duplicate edges are not allowed")
        self.num_nodes = num_nodes
        self.edges = e
        self.edges.setflags(write=False)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.bincount(self.edges.ravel(), minlength=self.num_nodes)
        d.setflags(write=False)
        return d

    def incidence(self) -> scipy.sparse.csc_matrix:
        """Signed incidence matrix D of shape (num_nodes, num_edges)."""
        m = self.num_edges
        rows = self.edges.ravel()
        cols = np.repeat(np.arange(m), 2)
        vals = np.tile(np.array([1.0, -1.0]), m)
        return scipy.sparse.csc_matrix(
            (vals, (rows, cols)), shape=(self.num_nodes, m)
        )

    def __repr__(self) -> str:
        return f"IncidenceGraph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def incidence_apply(g: IncidenceGraph, v: np.ndarray) -> np.ndarray:
    """Per-edge differences ``D^T v``: entry j is v[smaller] - v[larger]."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size != g.num_nodes:
        raise ShapeMismatchError(
            f"node vector has shape {v.shape}, expected ({g.num_nodes},)"
        )
    if g.num_edges == 0:
        return np.empty(0)
    return v[g.edges[:, 0]] - v[g.edges[:, 1]]


def grid_graph(dims) -> IncidenceGraph:
    """Lattice graph over a tensor's voxels.

    Vertices are numbered in vectorized (first index fastest) order and
    joined to axis-aligned neighbors, so the graph lines up with vectorized
    coefficient maps of the same shape.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise ValueError("need at least one axis")
    if any(d < 1 for d in dims):
        raise ValueError(f"axis sizes must be >= 1, got {dims}")
    M = int(np.prod(dims))
    idx = np.arange(M, dtype=np.int64).reshape(dims, order="F")
    blocks = []
    for axis in range(len(dims)):
        if dims[axis] < 2:
            continue
        head = [slice(None)] * len(dims)
        tail = [slice(None)] * len(dims)
        head[axis] = slice(0, -1)
        tail[axis] = slice(1, None)
        a = idx[tuple(head)].ravel(order="F")
        b = idx[tuple(tail)].ravel(order="F")
        blocks.append(np.column_stack([a, b]))
    if blocks:
        edges = np.concatenate(blocks, axis=0)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return IncidenceGraph(M, edges)


def add_lag_edges(g: IncidenceGraph, lag: int, count: int) -> IncidenceGraph:
    """Return a new graph with edges (i, i+lag) added for i = 0..count-1.

    Useful for tying a 1-D chain to itself across a known period.  Errors if
    any endpoint falls outside the graph or an added edge already exists.
    """
    lag = int(lag)
    count = int(count)
    if lag < 1:
        raise ValueError(f"lag must be >= 1, got {lag}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count - 1 + lag >= g.num_nodes:
        raise ValueError(
            f"edge ({count - 1}, {count - 1 + lag}) leaves the graph "
            f"({g.num_nodes} nodes)"
        )
    i = np.arange(count, dtype=np.int64)
    new = np.column_stack([i, i + lag])
    return IncidenceGraph(g.num_nodes, np.concatenate([g.edges, new], axis=0))


def connected_components(g: IncidenceGraph) -> list[np.ndarray]:
    """Partition of the vertex set into connected components.

    Components are ordered by their smallest vertex; isolated vertices form
    singletons.
    """
    m = g.num_edges
    adj = scipy.sparse.csr_matrix(
        (np.ones(m), (g.edges[:, 0], g.edges[:, 1])),
        shape=(g.num_nodes, g.num_nodes),
    )
    ncomp, labels = scipy.sparse.csgraph.connected_components(adj, directed=False)
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


def max_degree(g: IncidenceGraph) -> int:
    return int(g.degrees.max()) if g.num_nodes else 0


@dataclass(frozen=True)
class TrailDecomposition:
    """Edge-disjoint trails covering a graph.

    Attributes
    ----------
    trails : tuple of ndarray
        Node sequences; consecutive entries are adjacent in the graph, and a
        closed trail repeats its first node at the end.
    edge_cover : dict
        Maps each canonical edge ``(a, b)`` with a < b to
        ``(trail_index, position)`` where position t means the step from
        ``trails[i][t]`` to ``trails[i][t+1]``.
    """

    trails: tuple[np.ndarray, ...]
    edge_cover: dict[tuple[int, int], tuple[int, int]]


def _euler_circuit(start: int, adj: list[list[tuple[int, int]]], used: np.ndarray):
    """Iterative Hierholzer walk from ``start``; marks edges used.

    ``adj`` holds (neighbor, edge id) pairs sorted ascending so the walk is
    deterministic.  Returns the circuit as a list of (node, incoming edge id)
    with the first entry carrying edge id -1.
    """
    ptr = {}
    stack = [(start, -1)]
    path = []
    while stack:
        v, _ = stack[-1]
        advanced = False
        i = ptr.get(v, 0)
        lst = adj[v]
        while i < len(lst):
            u, eid = lst[i]
            if not used[eid]:
                used[eid] = True
                stack.append((u, eid))
                advanced = True
                break
            i += 1
        ptr[v] = i
        if not advanced:
            path.append(stack.pop())
    path.reverse()
    return path


def decompose_trails(g: IncidenceGraph) -> TrailDecomposition:
    """Split the edge set into trails.

    Odd-degree vertices are paired in ascending order with virtual edges, an
    Eulerian circuit is walked per component (always taking the lowest
    unused neighbor), and circuits are cut at the virtual edges.  Every real
    edge lands in exactly one trail; isolated vertices yield none.
    """
    m = g.num_edges
    if m == 0:
        return TrailDecomposition(trails=(), edge_cover={})

    virtual = []
    for comp in connected_components(g):
        if g.degrees[comp].sum() == 0:
            continue
        odd = [int(v) for v in comp if g.degrees[v] % 2 == 1]
        for a, b in zip(odd[0::2], odd[1::2]):
            virtual.append((a, b))

    all_edges = [tuple(e) for e in g.edges.tolist()] + virtual
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.num_nodes)]
    for eid, (a, b) in enumerate(all_edges):
        adj[a].append((b, eid))
        adj[b].append((a, eid))
    for lst in adj:
        lst.sort()

    used = np.zeros(len(all_edges), dtype=bool)
    trails: list[np.ndarray] = []
    cover: dict[tuple[int, int], tuple[int, int]] = {}
    visited_start = np.zeros(g.num_nodes, dtype=bool)
    for comp in connected_components(g):
        start = int(comp[0])
        if g.degrees[start] == 0 or visited_start[start]:
            continue
        visited_start[comp] = True
        path = _euler_circuit(start, adj, used)
        # steps[k] = (edge id, from node, to node) along the circuit
        steps = [
            (path[k][1], path[k - 1][0], path[k][0]) for k in range(1, len(path))
        ]
        for eid, a, b in steps:
            ea, eb = all_edges[eid]
            if {a, b} != {ea, eb}:  # walk bookkeeping invariant
                raise AssertionError("circuit step does not match its edge")
        first_virtual = next((k for k, s in enumerate(steps) if s[0] >= m), None)
        if first_virtual is None:
            runs = [steps]
        else:
            rotated = steps[first_virtual:] + steps[:first_virtual]
            runs = []
            current: list[tuple[int, int, int]] = []
            for s in rotated:
                if s[0] >= m:
                    if current:
                        runs.append(current)
                    current = []
                else:
                    current.append(s)
            if current:
                runs.append(current)
        for run in runs:
            tid = len(trails)
            nodes = [run[0][1]] + [s[2] for s in run]
            trails.append(np.asarray(nodes, dtype=np.int64))
            for pos, (eid, _, _) in enumerate(run):
                cover[all_edges[eid]] = (tid, pos)

    if len(cover) != m:  # every real edge exactly once
        raise AssertionError("trail decomposition failed to cover the edge set")
    return TrailDecomposition(trails=tuple(trails), edge_cover=cover)


def write_edge_list(g: IncidenceGraph, path) -> None:
    """Write one edge per line as two whitespace-separated 0-based indices."""
    with open(path, "w", encoding="ascii") as fh:
        for a, b in g.edges:
            fh.write(f"{a} {b}\n")


def read_edge_list(path, num_nodes: int | None = None) -> IncidenceGraph:
    """Parse an edge-list file; ``#`` starts a comment, blank lines are skipped.

    When ``num_nodes`` is omitted the vertex count is inferred as one plus
    the largest index seen, so trailing isolated vertices need it explicit.
    """
    edges = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two indices, got {raw!r}")
            edges.append((int(parts[0]), int(parts[1])))
    arr = np.asarray(edges, dtype=np.int64) if edges else np.empty((0, 2), np.int64)
    if num_nodes is None:
        if arr.size == 0:
            raise ValueError(f"{path}: empty edge list needs an explicit num_nodes")
        num_nodes = int(arr.max()) + 1
    return IncidenceGraph(num_nodes, arr)
