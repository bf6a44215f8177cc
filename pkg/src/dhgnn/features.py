"""Feature assembly: raw cell attributes plus optional structural blocks.

The cell matrix always starts with the base block
[norm_width, norm_height, orient one-hot(8), cell_degree] and the net
matrix with [net_degree]. Optional blocks append in a fixed order
(degree histogram, Laplacian PE, persistence images) and the layout is
recorded as named (name, width) blocks so files stay self-describing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import binio
from .hypergraph import DirectedHypergraph, star_graph, bipartite_graph
from .persistence import (
    DEGREE_BIN_EDGES,
    PersistenceImageParams,
    degree_distribution,
    node_pd_features,
)
from .spectral import lap_pe

FEATURE_MAGIC = b"DEHF"
FEATURE_VERSION = 1


@dataclass
class FeatureTable:
    cell: np.ndarray
    net: np.ndarray
    cell_blocks: list[tuple[str, int]] = field(default_factory=list)
    net_blocks: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if sum(w for _, w in self.cell_blocks) != self.cell.shape[1]:
            raise ValueError("cell block widths do not cover the cell matrix")
        if sum(w for _, w in self.net_blocks) != self.net.shape[1]:
            raise ValueError("net block widths do not cover the net matrix")

    def cell_block(self, name: str) -> np.ndarray:
        off = 0
        for blk, width in self.cell_blocks:
            if blk == name:
                return self.cell[:, off:off + width]
            off += width
        raise KeyError(name)


def _minmax(col: np.ndarray) -> np.ndarray:
    lo, hi = float(col.min()), float(col.max())
    if hi == lo:
        return np.full(col.shape, 0.5)
    return (col - lo) / (hi - lo)


def base_features(g: DirectedHypergraph) -> FeatureTable:
    """Normalized geometry plus degree columns.

    Width/height are min-max scaled per design (a constant column maps to
    0.5 so it stays informative across designs); orientation is one-hot;
    degrees are appended raw. The net feature is the net degree |S|+1.
    """
    if g.n_cells == 0:
        raise ValueError("need at least one cell")
    widths = np.array([c.width for c in g.cells], dtype=np.float64)
    heights = np.array([c.height for c in g.cells], dtype=np.float64)
    onehot = np.zeros((g.n_cells, 8))
    for i, c in enumerate(g.cells):
        onehot[i, c.orient] = 1.0
    degree = np.array([len(inc) for inc in g.incidence], dtype=np.float64)
    cell = np.column_stack([_minmax(widths), _minmax(heights), onehot, degree])
    net = np.array([[len(n.sinks) + 1.0] for n in g.nets]).reshape(g.n_nets, 1)
    return FeatureTable(cell=cell, net=net,
                        cell_blocks=[("base", 11)], net_blocks=[("net_degree", 1)])


def assemble_features(
    g: DirectedHypergraph,
    pd: bool = False,
    lappe: bool = False,
    deg_dist: bool = False,
    k_hops: int = 6,
    image_res: int = 8,
    pe_dim: int = 10,
    pe_seed: int = 0,
) -> FeatureTable:
    table = base_features(g)
    cell_parts = [table.cell]
    net_parts = [table.net]
    cell_blocks = list(table.cell_blocks)
    net_blocks = list(table.net_blocks)
    star = star_graph(g) if (pd or deg_dist) else None

    if deg_dist:
        hist = np.stack([degree_distribution(star, v, k_hops) for v in range(g.n_cells)])
        cell_parts.append(hist)
        cell_blocks.append(("deg_dist", len(DEGREE_BIN_EDGES) + 1))

    if lappe:
        s = min(pe_dim, max(bipartite_graph(g).n - 2, 0))
        cell_pe, net_pe = lap_pe(g, s=s, seed=pe_seed)
        cell_parts.append(cell_pe)
        net_parts.append(net_pe)
        cell_blocks.append(("lap_pe", s))
        net_blocks.append(("lap_pe", s))

    if pd:
        params = PersistenceImageParams.for_k_hops(k_hops, resolution=image_res)
        imgs = np.stack([node_pd_features(star, v, k_hops, params) for v in range(g.n_cells)])
        cell_parts.append(imgs)
        cell_blocks.append(("pd_image", 6 * image_res * image_res))

    return FeatureTable(
        cell=np.column_stack(cell_parts) if len(cell_parts) > 1 else cell_parts[0],
        net=np.column_stack(net_parts) if len(net_parts) > 1 else net_parts[0],
        cell_blocks=cell_blocks,
        net_blocks=net_blocks,
    )


def write_matrix(path: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("feature matrices are 2-d")
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        binio.write_u32(f, FEATURE_VERSION)
        binio.write_u64(f, arr.shape[0])
        binio.write_u64(f, arr.shape[1])
        binio.write_f64_block(f, arr)


def read_matrix(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        binio.expect_magic(f, FEATURE_MAGIC, "feature matrix")
        version = binio.read_u32(f)
        if version != FEATURE_VERSION:
            raise ValueError(f"unsupported feature version {version}")
        rows = binio.read_u64(f)
        cols = binio.read_u64(f)
        return binio.read_f64_block(f, rows, cols)


def _blocks_path(path: str) -> str:
    return path + ".blocks.txt"


def write_feature_matrix(table: FeatureTable, path: str) -> None:
    write_matrix(path, table.cell)
    write_matrix(path + ".nets", table.net)
    with open(_blocks_path(path), "w", encoding="utf-8") as f:
        for name, width in table.cell_blocks:
            f.write(f"cell {name} {width}\n")
        for name, width in table.net_blocks:
            f.write(f"net {name} {width}\n")


def read_feature_matrix(path: str) -> FeatureTable:
    cell = read_matrix(path)
    net = read_matrix(path + ".nets")
    cell_blocks: list[tuple[str, int]] = []
    net_blocks: list[tuple[str, int]] = []
    with open(_blocks_path(path), encoding="utf-8") as f:
        for line in f:
            kind, name, width = line.split()
            (cell_blocks if kind == "cell" else net_blocks).append((name, int(width)))
    return FeatureTable(cell=cell, net=net, cell_blocks=cell_blocks, net_blocks=net_blocks)
