"""Dynamic contact graphs: one undirected edge set per timestep over a fixed node set.

Edges are stored canonically as (u, v) with u < v, so symmetric duplicates
collapse to a single edge.  The node set is fixed for the whole history; a node
with no contacts at a timestep simply has an empty neighbor list there.
"""

from __future__ import annotations

import csv
import math
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ProximityFormatError

PROXIMITY_HEADER = ("t", "u", "v")


class DynamicGraph:
    """A sequence of undirected graphs on nodes 0..num_nodes-1.

    Arguments:
        num_nodes: size of the node set, shared by every timestep.
        edges_by_step: per-timestep iterables of (u, v) pairs. Pairs are
            canonicalized to u < v and deduplicated.
    """

    def __init__(self, num_nodes: int, edges_by_step: Iterable[Iterable[tuple[int, int]]]):
        if num_nodes < 1:
            raise ValueError("num_nodes must be positive")
        self.num_nodes = int(num_nodes)
        canonical: list[tuple[tuple[int, int], ...]] = []
        for t, step_edges in enumerate(edges_by_step):
            seen = set()
            for u, v in step_edges:
                u = int(u)
                v = int(v)
                if u == v:
                    raise ValueError(f"self-loop ({u},{v}) at timestep {t}")
                if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                    raise ValueError(f"edge ({u},{v}) at timestep {t} out of range for {num_nodes} nodes")
                seen.add((u, v) if u < v else (v, u))
            canonical.append(tuple(sorted(seen)))
        if not canonical:
            raise ValueError("graph needs at least one timestep")
        self._edges = tuple(canonical)
        self.num_steps = len(self._edges)
        self._csr: tuple[np.ndarray, np.ndarray] | None = None

    def edges(self, t: int) -> tuple[tuple[int, int], ...]:
        """Canonical (u < v) edge tuple at timestep t."""
        self._check_step(t)
        return self._edges[t]

    def neighbors(self, n: int, t: int) -> list[int]:
        """Sorted neighbor ids of node n at timestep t."""
        self._check_step(t)
        if not 0 <= n < self.num_nodes:
            raise ValueError(f"node {n} out of range for {self.num_nodes} nodes")
        indptr, ids = self.csr()
        base = t * self.num_nodes + n
        return ids[indptr[base]:indptr[base + 1]].tolist()

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat per-(timestep, node) adjacency: (indptr, neighbor ids).

        Neighbors of node n at step t occupy ids[indptr[t*N+n]:indptr[t*N+n+1]],
        sorted ascending. Built once and cached; treat the arrays as read-only.
        """
        if self._csr is None:
            N = self.num_nodes
            slots = []
            others = []
            for t, step in enumerate(self._edges):
                if not step:
                    continue
                arr = np.asarray(step, dtype=np.int64)
                slots.append(t * N + arr[:, 0])
                others.append(arr[:, 1])
                slots.append(t * N + arr[:, 1])
                others.append(arr[:, 0])
            if slots:
                slot = np.concatenate(slots)
                other = np.concatenate(others)
                order = np.lexsort((other, slot))
                ids = other[order].astype(np.int32)
                counts = np.bincount(slot, minlength=self.num_steps * N)
            else:
                ids = np.zeros(0, dtype=np.int32)
                counts = np.zeros(self.num_steps * N, dtype=np.int64)
            indptr = np.zeros(self.num_steps * N + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            self._csr = (indptr, ids)
        return self._csr

    def mean_degree(self) -> float:
        """Average number of contacts per node per timestep."""
        total = sum(len(step) for step in self._edges)
        return 2.0 * total / (self.num_nodes * self.num_steps)

    def max_degree(self) -> int:
        indptr, _ = self.csr()
        if len(indptr) == 1:
            return 0
        return int(np.max(np.diff(indptr)))

    def _check_step(self, t: int) -> None:
        if not 0 <= t < self.num_steps:
            raise ValueError(f"timestep {t} out of range for {self.num_steps} steps")

    def __eq__(self, other) -> bool:
        if not isinstance(other, DynamicGraph):
            return NotImplemented
        return self.num_nodes == other.num_nodes and self._edges == other._edges

    def __repr__(self) -> str:
        total = sum(len(step) for step in self._edges)
        return f"DynamicGraph(num_nodes={self.num_nodes}, num_steps={self.num_steps}, edges={total})"


def load_proximity(source: str | IO[str], num_nodes: int | None = None,
                   num_steps: int | None = None) -> DynamicGraph:
    """Read a dynamic graph from proximity CSV with header t,u,v.

    Node and timestep counts are inferred from the data unless given, in which
    case out-of-range rows raise. Rows that fail to parse raise
    ProximityFormatError carrying the 1-based line number.
    """
    if isinstance(source, str):
        with open(source, newline="") as fh:
            return load_proximity(fh, num_nodes=num_nodes, num_steps=num_steps)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ProximityFormatError(1, "missing header") from None
    if tuple(h.strip() for h in header) != PROXIMITY_HEADER:
        raise ProximityFormatError(1, f"expected header {','.join(PROXIMITY_HEADER)}")

    rows: list[tuple[int, int, int]] = []
    max_t = -1
    max_node = -1
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise ProximityFormatError(lineno, f"expected 3 fields, got {len(row)}")
        try:
            t, u, v = (int(field) for field in row)
        except ValueError:
            raise ProximityFormatError(lineno, f"non-integer field in {row!r}") from None
        if t < 0:
            raise ProximityFormatError(lineno, f"negative timestep {t}")
        if u < 0 or v < 0:
            raise ProximityFormatError(lineno, f"negative node id in {row!r}")
        if u == v:
            raise ProximityFormatError(lineno, f"self-loop at node {u}")
        if num_steps is not None and t >= num_steps:
            raise ProximityFormatError(lineno, f"timestep {t} out of declared range {num_steps}")
        if num_nodes is not None and (u >= num_nodes or v >= num_nodes):
            raise ProximityFormatError(lineno, f"node id out of declared range {num_nodes}")
        rows.append((t, u, v))
        max_t = max(max_t, t)
        max_node = max(max_node, u, v)

    steps = num_steps if num_steps is not None else max_t + 1
    nodes = num_nodes if num_nodes is not None else max_node + 1
    if steps < 1:
        raise ValueError("proximity data declares no timesteps")
    if nodes < 1:
        raise ValueError("proximity data declares no nodes")
    edges_by_step: list[list[tuple[int, int]]] = [[] for _ in range(steps)]
    for t, u, v in rows:
        edges_by_step[t].append((u, v))
    return DynamicGraph(nodes, edges_by_step)


def dump_proximity(graph: DynamicGraph, sink: str | IO[str]) -> None:
    """Write a graph as proximity CSV, rows sorted by (t, u, v)."""
    if isinstance(sink, str):
        with open(sink, "w", newline="") as fh:
            dump_proximity(graph, fh)
            return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(PROXIMITY_HEADER)
    for t in range(graph.num_steps):
        for u, v in graph.edges(t):
            writer.writerow((t, u, v))


def infectious_neighbor_counts(graph: DynamicGraph, states: np.ndarray) -> np.ndarray:
    """Count infectious neighbors of every node at every timestep.

    states is an (N, T) 0/1 array; the result is (N, T) int32 where entry
    (n, t) counts neighbors m of n at timestep t with states[m, t] == 1.
    """
    indptr, ids = graph.csr()
    from ._kernels import build_pressure

    return build_pressure(np.ascontiguousarray(states, dtype=np.int8), indptr, ids,
                          graph.num_nodes, graph.num_steps)


def random_dynamic_graph(num_nodes: int, num_steps: int, edge_prob: float,
                         rng: np.random.Generator) -> DynamicGraph:
    """Independent Erdos-Renyi snapshot per timestep; handy for tests."""
    pairs = [(u, v) for u in range(num_nodes) for v in range(u + 1, num_nodes)]
    edges_by_step = []
    for _ in range(num_steps):
        mask = rng.random(len(pairs)) < edge_prob
        edges_by_step.append([p for p, keep in zip(pairs, mask) if keep])
    return DynamicGraph(num_nodes, edges_by_step)
