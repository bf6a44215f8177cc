"""Balanced k-way partitioning of the cell set and the virtual-node
hierarchy built over it.

The partitioner is a self-contained multilevel scheme: heavy-edge matching
coarsens the clique-expanded netlist, a greedy region-growing bisection
splits the coarsest graph, and each uncoarsening level runs boundary
Fiduccia-Mattheyses passes (positive-gain moves only, one move per vertex
per pass, balance enforced on every move). Deterministic for a fixed seed:
every tie breaks toward the lowest vertex id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .hypergraph import DirectedHypergraph


class InfeasibleBalance(ValueError):
    """No assignment can satisfy the part-size bound (e.g. k > n)."""


@dataclass
class WeightedGraph:
    """Undirected graph with float edge weights and integer node weights."""

    n: int
    edges: np.ndarray        # (m, 2) int64, u < v, sorted, unique
    weights: np.ndarray      # (m,) float64
    node_weights: np.ndarray  # (n,) int64

    @cached_property
    def adj(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR over both directions: (indptr, neighbor, weight)."""
        if len(self.edges) == 0:
            return (np.zeros(self.n + 1, dtype=np.int64),
                    np.zeros(0, dtype=np.int64), np.zeros(0))
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        w = np.concatenate([self.weights, self.weights])
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, dst, w

    def neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        indptr, dst, w = self.adj
        return dst[indptr[v]:indptr[v + 1]], w[indptr[v]:indptr[v + 1]]


@dataclass
class Partition:
    part_of: np.ndarray  # (n,) int64 in [0, k)
    k: int
    epsilon: float
    cut: float


@dataclass
class VnHierarchy:
    """Two-level virtual-node overlay: one VN per part, plus a super node
    over them when k > 1. VN node ids live above the cell ids: level-1 VN i
    is node n_cells + i, the super node (if any) is n_cells + k."""

    k: int
    part_of: np.ndarray
    level1_members: list = field(repr=False)
    has_super: bool = False

    @property
    def added_edge_count(self) -> int:
        return len(self.part_of) + (self.k if self.has_super else 0)

    def added_edges(self) -> np.ndarray:
        n = len(self.part_of)
        cell_edges = np.stack([np.arange(n), n + self.part_of], axis=1)
        if not self.has_super:
            return cell_edges
        super_edges = np.stack([n + np.arange(self.k),
                                np.full(self.k, n + self.k)], axis=1)
        return np.concatenate([cell_edges, super_edges])


def expand_weights(g: DirectedHypergraph) -> WeightedGraph:
    """Clique expansion: each net of p cells adds weight 1/(p-1) to every
    pair; single-cell nets contribute nothing."""
    acc: dict[tuple[int, int], float] = {}
    for net in g.nets:
        cells = (net.driver,) + net.sinks
        p = len(cells)
        if p < 2:
            continue
        w = 1.0 / (p - 1)
        for i in range(p):
            for j in range(i + 1, p):
                a, b = cells[i], cells[j]
                key = (a, b) if a < b else (b, a)
                acc[key] = acc.get(key, 0.0) + w
    if acc:
        keys = sorted(acc)
        edges = np.array(keys, dtype=np.int64)
        weights = np.array([acc[k] for k in keys])
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
        weights = np.zeros(0)
    return WeightedGraph(n=g.n_cells, edges=edges, weights=weights,
                         node_weights=np.ones(g.n_cells, dtype=np.int64))


def cut_value(wg: WeightedGraph, part_of: np.ndarray) -> float:
    if len(wg.edges) == 0:
        return 0.0
    across = part_of[wg.edges[:, 0]] != part_of[wg.edges[:, 1]]
    return float(wg.weights[across].sum())


def _coarsen(wg: WeightedGraph, rng: np.random.Generator,
             max_node_weight: int) -> tuple[WeightedGraph, np.ndarray]:
    """One heavy-edge matching level. Returns (coarse graph, fine->coarse map)."""
    n = wg.n
    match = np.full(n, -1, dtype=np.int64)
    order = rng.permutation(n)
    indptr, dst, w = wg.adj
    for v in order:
        if match[v] != -1:
            continue
        nbrs = dst[indptr[v]:indptr[v + 1]]
        wts = w[indptr[v]:indptr[v + 1]]
        best, best_w = -1, -1.0
        for u, wu in zip(nbrs, wts):
            if match[u] != -1:
                continue
            if wg.node_weights[v] + wg.node_weights[u] > max_node_weight:
                continue
            if wu > best_w or (wu == best_w and (best == -1 or u < best)):
                best, best_w = int(u), float(wu)
        if best == -1:
            match[v] = v
        else:
            match[v] = best
            match[best] = v
    # coarse ids in order of the lowest member id
    rep = np.minimum(np.arange(n), match)
    reps_sorted = np.unique(rep)
    coarse_of_rep = {int(r): i for i, r in enumerate(reps_sorted)}
    fine_to_coarse = np.array([coarse_of_rep[int(r)] for r in rep], dtype=np.int64)
    nc = len(reps_sorted)
    node_w = np.zeros(nc, dtype=np.int64)
    np.add.at(node_w, fine_to_coarse, wg.node_weights)
    eacc: dict[tuple[int, int], float] = {}
    for (u, v), wt in zip(wg.edges, wg.weights):
        cu, cv = int(fine_to_coarse[u]), int(fine_to_coarse[v])
        if cu == cv:
            continue
        key = (cu, cv) if cu < cv else (cv, cu)
        eacc[key] = eacc.get(key, 0.0) + float(wt)
    if eacc:
        keys = sorted(eacc)
        edges = np.array(keys, dtype=np.int64)
        weights = np.array([eacc[k] for k in keys])
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
        weights = np.zeros(0)
    coarse = WeightedGraph(n=nc, edges=edges, weights=weights, node_weights=node_w)
    return coarse, fine_to_coarse


def _region_grow(wg: WeightedGraph, nodes: np.ndarray, target_w: float,
                 min_nodes: int, max_nodes: int, rng: np.random.Generator) -> np.ndarray:
    """Grow a connected-ish region inside `nodes` toward target weight,
    keeping both sides large enough to host their parts."""
    nodes = np.sort(nodes)
    inside = {int(v) for v in nodes}
    grown: set[int] = set()
    gain: dict[int, float] = {}
    weight = 0
    pool = [int(v) for v in nodes]

    def add(v: int) -> None:
        nonlocal weight
        grown.add(v)
        gain.pop(v, None)
        weight += int(wg.node_weights[v])
        nbrs, wts = wg.neighbors(v)
        for u, wu in zip(nbrs, wts):
            u = int(u)
            if u in inside and u not in grown:
                gain[u] = gain.get(u, 0.0) + float(wu)

    start = int(rng.choice(nodes))
    add(start)
    while weight < target_w and len(grown) < max_nodes:
        if gain:
            # highest connection to the grown set, lowest id on ties
            best = min(gain.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        else:
            remaining = [v for v in pool if v not in grown]
            if not remaining:
                break
            best = int(rng.choice(remaining))
        add(best)
    while len(grown) < min_nodes:
        remaining = [v for v in pool if v not in grown]
        add(remaining[0])
    return np.array(sorted(grown), dtype=np.int64)


def _initial_partition(wg: WeightedGraph, k: int, bound: int,
                       rng: np.random.Generator) -> np.ndarray:
    part_of = np.zeros(wg.n, dtype=np.int64)

    def recurse(nodes: np.ndarray, kk: int, first_part: int) -> None:
        if kk == 1:
            part_of[nodes] = first_part
            return
        k1 = kk // 2
        k2 = kk - k1
        total = int(wg.node_weights[nodes].sum())
        target = total * (k1 / kk)
        grown = _region_grow(wg, nodes, target,
                             min_nodes=k1, max_nodes=len(nodes) - k2, rng=rng)
        rest = np.setdiff1d(nodes, grown, assume_unique=True)
        recurse(grown, k1, first_part)
        recurse(rest, k2, first_part + k1)

    recurse(np.arange(wg.n), k, 0)
    return part_of


def _part_conn(wg: WeightedGraph, v: int, part_of: np.ndarray) -> dict[int, float]:
    conn: dict[int, float] = {}
    nbrs, wts = wg.neighbors(v)
    for u, wu in zip(nbrs, wts):
        p = int(part_of[u])
        conn[p] = conn.get(p, 0.0) + float(wu)
    return conn


def _rebalance(wg: WeightedGraph, part_of: np.ndarray, k: int, bound: int) -> None:
    """Deterministically repair overweight and empty parts in place."""
    sizes = np.zeros(k, dtype=np.int64)
    np.add.at(sizes, part_of, wg.node_weights)
    counts = np.bincount(part_of, minlength=k)

    def move(v: int, q: int) -> None:
        p = int(part_of[v])
        part_of[v] = q
        sizes[p] -= wg.node_weights[v]
        sizes[q] += wg.node_weights[v]
        counts[p] -= 1
        counts[q] += 1

    guard = 4 * wg.n + 4 * k
    while sizes.max() > bound:
        if guard == 0:
            raise InfeasibleBalance("rebalancing did not converge")
        guard -= 1
        p = int(sizes.argmax())
        if counts[p] <= 1:
            raise InfeasibleBalance(
                f"a single node of weight {int(sizes[p])} exceeds bound {bound}")
        members = np.flatnonzero(part_of == p)
        best = None  # (neg gain, v, q)
        for v in members:
            conn = _part_conn(wg, int(v), part_of)
            stay = conn.get(p, 0.0)
            for q in range(k):
                if q == p or sizes[q] + wg.node_weights[v] > bound:
                    continue
                cand = (stay - conn.get(q, 0.0), int(v), q)
                if best is None or cand < best:
                    best = cand
        if best is None:
            raise InfeasibleBalance(
                f"part weight {int(sizes.max())} exceeds bound {bound} and no move fits")
        move(best[1], best[2])
    while counts.min() == 0:
        q = int(counts.argmin())
        p = int(counts.argmax())
        if counts[p] <= 1:
            raise InfeasibleBalance("cannot fill an empty part")
        members = np.flatnonzero(part_of == p)
        best = None
        for v in members:
            conn = _part_conn(wg, int(v), part_of)
            cand = (conn.get(p, 0.0) - conn.get(q, 0.0), int(v))
            if best is None or cand < best:
                best = cand
        move(best[1], q)


def _fm_refine(wg: WeightedGraph, part_of: np.ndarray, k: int, bound: int,
               max_passes: int = 10, trace: list | None = None) -> None:
    """Boundary FM: repeatedly move the highest-gain unlocked boundary
    vertex while balance allows; only strictly positive gains move."""
    import heapq

    sizes = np.zeros(k, dtype=np.int64)
    np.add.at(sizes, part_of, wg.node_weights)
    counts = np.bincount(part_of, minlength=k)
    indptr, dst, _ = wg.adj

    def push_moves(heap: list, v: int) -> None:
        p = int(part_of[v])
        conn = _part_conn(wg, v, part_of)
        stay = conn.get(p, 0.0)
        for q, cq in conn.items():
            if q == p:
                continue
            gain = cq - stay
            if gain > 0.0:
                heapq.heappush(heap, (-gain, v, q))

    for _ in range(max_passes):
        locked = np.zeros(wg.n, dtype=bool)
        heap: list[tuple[float, int, int]] = []
        for v in range(wg.n):
            push_moves(heap, v)
        moved = 0
        while heap:
            neg_gain, v, q = heapq.heappop(heap)
            p = int(part_of[v])
            if locked[v] or q == p:
                continue
            conn = _part_conn(wg, v, part_of)
            gain = conn.get(q, 0.0) - conn.get(p, 0.0)
            if gain <= 0.0:
                continue
            if abs(-neg_gain - gain) > 1e-12:
                heapq.heappush(heap, (-gain, v, q))  # stale entry, refresh
                continue
            if sizes[q] + wg.node_weights[v] > bound or counts[p] <= 1:
                continue
            part_of[v] = q
            sizes[p] -= wg.node_weights[v]
            sizes[q] += wg.node_weights[v]
            counts[p] -= 1
            counts[q] += 1
            locked[v] = True
            moved += 1
            for u in dst[indptr[v]:indptr[v + 1]]:
                if not locked[u]:
                    push_moves(heap, int(u))
        if trace is not None:
            trace.append((cut_value(wg, part_of), int(sizes.max())))
        if moved == 0:
            break


def partition(wg: WeightedGraph, k: int, epsilon: float = 0.05,
              seed: int = 0) -> Partition:
    n = wg.n
    if k < 1:
        raise InfeasibleBalance("k must be >= 1")
    if k > n:
        raise InfeasibleBalance(f"k={k} parts need at least k cells, have {n}")
    total_w = int(wg.node_weights.sum())
    bound = math.ceil((1.0 + epsilon) * total_w / k)
    if k == 1:
        return Partition(part_of=np.zeros(n, dtype=np.int64), k=1,
                         epsilon=epsilon, cut=0.0)
    rng = np.random.default_rng(seed)

    # coarsening phase
    levels: list[tuple[WeightedGraph, np.ndarray]] = []
    cur = wg
    limit = max(30 * k, 200)
    while cur.n > limit:
        coarse, fmap = _coarsen(cur, rng, max_node_weight=bound)
        if coarse.n >= cur.n:
            break
        levels.append((cur, fmap))
        cur = coarse

    part_of = _initial_partition(cur, k, bound, rng)
    _rebalance(cur, part_of, k, bound)
    _fm_refine(cur, part_of, k, bound)

    # uncoarsening phase
    for fine, fmap in reversed(levels):
        part_of = part_of[fmap]
        _rebalance(fine, part_of, k, bound)
        _fm_refine(fine, part_of, k, bound)

    return Partition(part_of=part_of, k=k, epsilon=epsilon,
                     cut=cut_value(wg, part_of))


def choose_k(n_cells: int, target_part_size: int = 1000) -> int:
    if target_part_size < 1:
        raise ValueError("target_part_size must be >= 1")
    return max(1, math.floor(n_cells / target_part_size + 0.5))


def build_vn_hierarchy(g: DirectedHypergraph, part: Partition) -> VnHierarchy:
    part_of = np.asarray(part.part_of, dtype=np.int64)
    if len(part_of) != g.n_cells:
        raise ValueError("partition does not cover the cell set")
    if len(part_of) and (part_of.min() < 0 or part_of.max() >= part.k):
        raise ValueError("part id out of range")
    members = [np.flatnonzero(part_of == i) for i in range(part.k)]
    return VnHierarchy(k=part.k, part_of=part_of, level1_members=members,
                       has_super=part.k > 1)


def write_partition_file(path: str, part: Partition) -> None:
    with open(path, "w") as f:
        for cell, p in enumerate(part.part_of):
            f.write(f"{cell} {int(p)}\n")


def read_partition_file(path: str) -> np.ndarray:
    parts: list[int] = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValueError(f"line {lineno}: want '<cell-id> <part>'")
            cell, p = int(fields[0]), int(fields[1])
            if cell != len(parts):
                raise ValueError(f"line {lineno}: cell ids must be dense and ascending")
            parts.append(p)
    return np.array(parts, dtype=np.int64)
