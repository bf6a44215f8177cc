"""Shared fixtures: the 7-cell worked example and random instance builders."""

from __future__ import annotations

import numpy as np
import pytest

from dhgnn import hypergraph as hg


def seven_cell_nets() -> list[hg.NetRecord]:
    """The worked 7-cell / 5-net example used across the docs and tests.

    Net 0: cell 0 drives {2, 3};  net 1: cell 1 drives {2, 4, 6};
    net 2: cell 3 drives {5};     net 3: cell 4 drives {5};
    net 4: cell 2 drives {4, 6}.
    """
    return [
        hg.NetRecord(0, (2, 3)),
        hg.NetRecord(1, (2, 4, 6)),
        hg.NetRecord(3, (5,)),
        hg.NetRecord(4, (5,)),
        hg.NetRecord(2, (4, 6)),
    ]


@pytest.fixture
def seven_cell() -> hg.DirectedHypergraph:
    cells = [hg.CellRecord("std", 1.0 + i, 2.0, i % 8) for i in range(7)]
    return hg.build(cells, seven_cell_nets())


def rand_hypergraph(rng: np.random.Generator, n_cells: int, n_nets: int,
                    max_sinks: int = 4, allow_empty: bool = True) -> hg.DirectedHypergraph:
    """Random valid hypergraph for property tests."""
    cells = [
        hg.CellRecord("t%d" % rng.integers(0, 3), float(rng.uniform(0.5, 4.0)),
                      float(rng.uniform(0.5, 4.0)), int(rng.integers(0, 8)))
        for _ in range(n_cells)
    ]
    nets = []
    lo = 0 if allow_empty else 1
    for _ in range(n_nets):
        driver = int(rng.integers(0, n_cells))
        others = [c for c in range(n_cells) if c != driver]
        n_sink = int(rng.integers(lo, min(max_sinks, len(others)) + 1)) if others else 0
        sinks = rng.choice(others, size=n_sink, replace=False) if n_sink else []
        nets.append(hg.NetRecord(driver, tuple(int(s) for s in sinks)))
    return hg.build(cells, nets)


def rand_digraph(rng: np.random.Generator, n: int, p: float) -> hg.DirectedGraph:
    """Erdos-Renyi style directed graph (no self loops)."""
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    src, dst = np.nonzero(mask)
    edges = np.stack([src, dst], axis=1).astype(np.int64)
    return hg.DirectedGraph(n=n, edges=edges)
