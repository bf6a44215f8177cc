"""Directed hypergraph model of a netlist.

A netlist is a set of cells plus nets, where each net is a tuple
(driver cell, set of sink cells). The structure here is immutable after
build() and keeps everything in a canonical order (sinks sorted ascending,
incidence lists sorted by net id) so that downstream aggregation has a
deterministic layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DRIVER = "driver"
SINK = "sink"


class DanglingCellRef(ValueError):
    """A net references a cell id that does not exist."""


class DriverInSinks(ValueError):
    """A net lists its own driver among its sinks."""


class DuplicateSink(ValueError):
    """A net lists the same sink cell more than once."""


@dataclass
class CellRecord:
    """Raw per-cell attributes in layout units (normalization happens later)."""

    type_tag: str = "std"
    width: float = 1.0
    height: float = 1.0
    orient: int = 0

    def __post_init__(self) -> None:
        if not (self.width >= 0.0 and self.height >= 0.0):
            raise ValueError("cell width/height must be finite and non-negative")
        if not 0 <= self.orient < 8:
            raise ValueError("orient must lie in [0, 8)")


@dataclass
class NetRecord:
    """One net: a driver cell id plus its sink cell ids (sorted ascending)."""

    driver: int
    sinks: tuple[int, ...]


@dataclass
class GraphStats:
    n_cells: int
    n_nets: int
    max_cell_degree: int
    max_net_size: int
    cell_degree_hist: dict[int, int]
    net_size_hist: dict[int, int]


@dataclass
class DirectedGraph:
    """Plain directed graph with CSR adjacency in both directions."""

    n: int
    edges: np.ndarray  # (m, 2) int64, lexicographically sorted, no duplicates

    @cached_property
    def out_adj(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.n, self.edges[:, 0], self.edges[:, 1])

    @cached_property
    def in_adj(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.n, self.edges[:, 1], self.edges[:, 0])

    @cached_property
    def und_adj(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return _csr(self.n, src, dst)


@dataclass
class UndirectedGraph:
    """Simple undirected graph; for the bipartite view first_net marks where
    net-nodes start (cells occupy [0, first_net))."""

    n: int
    edges: np.ndarray  # (m, 2) int64 with u < v, sorted, no duplicates
    first_net: int | None = None

    @cached_property
    def adj(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return _csr(self.n, src, dst)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if len(self.edges):
            deg += np.bincount(self.edges[:, 0], minlength=self.n)
            deg += np.bincount(self.edges[:, 1], minlength=self.n)
        return deg


@dataclass
class Subgraph:
    """Induced subgraph around a root, with hop distance per kept node."""

    nodes: np.ndarray       # sorted original node ids
    dist: np.ndarray        # hop distance aligned with nodes
    edges: np.ndarray       # induced directed edges, original ids, sorted

    def undirected_edges(self) -> np.ndarray:
        """Induced edges with direction dropped and duplicates merged."""
        if len(self.edges) == 0:
            return self.edges.reshape(0, 2)
        lo = np.minimum(self.edges[:, 0], self.edges[:, 1])
        hi = np.maximum(self.edges[:, 0], self.edges[:, 1])
        keep = lo != hi
        pairs = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)
        return pairs


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    if len(src):
        np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst


@dataclass
class DirectedHypergraph:
    cells: list[CellRecord]
    nets: list[NetRecord]
    # incidence[v] = sorted list of (net id, role) covering every net containing v
    incidence: list[list[tuple[int, str]]] = field(repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_nets(self) -> int:
        return len(self.nets)

    @cached_property
    def drivers(self) -> np.ndarray:
        return np.array([net.driver for net in self.nets], dtype=np.int64)

    @cached_property
    def cell_net_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Incidence as parallel arrays (cell, net), sorted by (cell, net)."""
        cells, nets = [], []
        for v, inc in enumerate(self.incidence):
            for net_id, _role in inc:
                cells.append(v)
                nets.append(net_id)
        return np.array(cells, dtype=np.int64), np.array(nets, dtype=np.int64)

    @cached_property
    def net_sink_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Sink membership as parallel arrays (net, sink cell), sorted by (net, cell)."""
        nets, cells = [], []
        for j, net in enumerate(self.nets):
            for s in net.sinks:
                nets.append(j)
                cells.append(s)
        return np.array(nets, dtype=np.int64), np.array(cells, dtype=np.int64)

    @cached_property
    def net_sizes(self) -> np.ndarray:
        """|S| + 1 per net (sinks plus the driver)."""
        return np.array([len(net.sinks) + 1 for net in self.nets], dtype=np.int64)


def build(cells: list[CellRecord], nets: list[NetRecord]) -> DirectedHypergraph:
    """Construct the canonical hypergraph, validating net membership.

    Malformed nets fail loudly: a driver listed among its own sinks or a
    repeated sink would silently corrupt degree-based features if repaired.
    """
    n = len(cells)
    canon_nets: list[NetRecord] = []
    for j, net in enumerate(nets):
        if not 0 <= net.driver < n:
            raise DanglingCellRef(f"net {j}: driver {net.driver} not a cell id")
        sinks = tuple(sorted(net.sinks))
        for s in sinks:
            if not 0 <= s < n:
                raise DanglingCellRef(f"net {j}: sink {s} not a cell id")
        if len(set(sinks)) != len(sinks):
            raise DuplicateSink(f"net {j}: repeated sink")
        if net.driver in sinks:
            raise DriverInSinks(f"net {j}: driver {net.driver} appears in sinks")
        canon_nets.append(NetRecord(net.driver, sinks))

    incidence: list[list[tuple[int, str]]] = [[] for _ in range(n)]
    for j, net in enumerate(canon_nets):
        incidence[net.driver].append((j, DRIVER))
        for s in net.sinks:
            incidence[s].append((j, SINK))
    for inc in incidence:
        inc.sort()
    return DirectedHypergraph(cells=cells, nets=canon_nets, incidence=incidence)


def incident_nets(g: DirectedHypergraph, v: int) -> list[tuple[int, str]]:
    """N(v): every net containing v, sorted by net id, with v's role in it."""
    if not 0 <= v < g.n_cells:
        raise DanglingCellRef(f"no cell {v}")
    return list(g.incidence[v])


def type_ab_neighbors(g: DirectedHypergraph, net_id: int) -> tuple[set, list[set]]:
    """Net neighborhood split by role: type A through the driver, type B per sink.

    type_a = N(driver); type_b = [N(s) for each sink s], the queried net
    included in each set (it is incident to its own members).
    """
    net = g.nets[net_id]
    type_a = {j for j, _ in g.incidence[net.driver]}
    type_b = [{j for j, _ in g.incidence[s]} for s in net.sinks]
    return type_a, type_b


def star_graph(g: DirectedHypergraph) -> DirectedGraph:
    """Directed graph with an edge driver -> sink per net membership, deduplicated."""
    if g.n_nets == 0:
        return DirectedGraph(n=g.n_cells, edges=np.empty((0, 2), dtype=np.int64))
    pairs = []
    for net in g.nets:
        for s in net.sinks:
            pairs.append((net.driver, s))
    if not pairs:
        return DirectedGraph(n=g.n_cells, edges=np.empty((0, 2), dtype=np.int64))
    edges = np.unique(np.array(pairs, dtype=np.int64), axis=0)
    return DirectedGraph(n=g.n_cells, edges=edges)


def bipartite_graph(g: DirectedHypergraph) -> UndirectedGraph:
    """Cell-net incidence graph: cells are nodes [0,n), nets [n, n+m)."""
    n = g.n_cells
    pairs = []
    for j, net in enumerate(g.nets):
        pairs.append((net.driver, n + j))
        for s in net.sinks:
            pairs.append((s, n + j))
    if not pairs:
        edges = np.empty((0, 2), dtype=np.int64)
    else:
        edges = np.array(sorted(pairs), dtype=np.int64)
    return UndirectedGraph(n=n + g.n_nets, edges=edges, first_net=n)


def k_ring(graph: DirectedGraph, v: int, k: int, mode: str = "out") -> Subgraph:
    """Induced subgraph on nodes within k hops of v, plus hop distances.

    mode "out" follows edges forward (nodes reachable from v), "in" follows
    them backward (nodes that reach v), "undirected" ignores direction.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if mode == "out":
        indptr, nbr = graph.out_adj
    elif mode == "in":
        indptr, nbr = graph.in_adj
    elif mode == "undirected":
        indptr, nbr = graph.und_adj
    else:
        raise ValueError(f"unknown mode {mode!r}")

    dist = {v: 0}
    frontier = [v]
    for d in range(1, k + 1):
        nxt = []
        for u in frontier:
            for w in nbr[indptr[u]:indptr[u + 1]]:
                w = int(w)
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        if not nxt:
            break
        frontier = nxt

    nodes = np.array(sorted(dist), dtype=np.int64)
    dvec = np.array([dist[u] for u in nodes], dtype=np.int64)
    if len(graph.edges):
        keep = np.isin(graph.edges[:, 0], nodes) & np.isin(graph.edges[:, 1], nodes)
        edges = graph.edges[keep]
    else:
        edges = graph.edges.reshape(0, 2)
    return Subgraph(nodes=nodes, dist=dvec, edges=edges)


def stats(g: DirectedHypergraph) -> GraphStats:
    degs = [len(inc) for inc in g.incidence]
    sizes = [len(net.sinks) + 1 for net in g.nets]
    cell_hist: dict[int, int] = {}
    for d in degs:
        cell_hist[d] = cell_hist.get(d, 0) + 1
    net_hist: dict[int, int] = {}
    for s in sizes:
        net_hist[s] = net_hist.get(s, 0) + 1
    return GraphStats(
        n_cells=g.n_cells,
        n_nets=g.n_nets,
        max_cell_degree=max(degs, default=0),
        max_net_size=max(sizes, default=0),
        cell_degree_hist=cell_hist,
        net_size_hist=net_hist,
    )
