"""Synthetic netlist generator with planted structural targets.

Each design has one net per cell (cell i drives net i). Net sizes follow a
shifted power law calibrated so the mean net degree hits the requested
value. Sinks are drawn preferentially by current degree inside an index
window around the driver, with a small fraction of global picks, which
gives the graph heavy-tailed degrees and enough locality that balanced
partitions have meaningful structure.

Targets are exact functions of the graph plus Gaussian noise:

    demand(net)    = alpha * log(1 + net_degree) + beta * n2(driver) + eps
    hpwl_log2(net) = affine in the same covariates, smaller noise
    congestion(v)  = quantile rank of the summed incident net demand

where n2(driver) counts the nets reachable from the driver within two
hops of the cell/net incidence walk. With noise_std=0 every target is
recomputable from the graph alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hypergraph import CellRecord, DirectedHypergraph, NetRecord, build
from .netlist import NetlistDoc, TargetTable

GLOBAL_SINK_PROB = 0.05
MAX_EXTRA_SINKS = 60


@dataclass
class SynthParams:
    n_cells: int
    seed: int = 0
    mean_net_degree: float = 3.5
    degree_tail_exponent: float = 2.0
    alpha: float = 2.0
    beta: float = 0.12
    noise_std: float = 0.3
    hpwl_base: float = 2.0
    hpwl_alpha: float = 1.5
    hpwl_beta: float = 0.02
    hpwl_noise_scale: float = 0.1

    def __post_init__(self) -> None:
        if self.n_cells < 2:
            raise ValueError("n_cells must be at least 2")
        if not self.mean_net_degree > 1.0:
            raise ValueError("mean_net_degree must exceed 1")
        if not self.degree_tail_exponent > 1.0:
            raise ValueError("degree_tail_exponent must exceed 1")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")
        for coef in (self.alpha, self.beta, self.hpwl_base, self.hpwl_alpha,
                     self.hpwl_beta, self.hpwl_noise_scale):
            if not math.isfinite(coef):
                raise ValueError("target coefficients must be finite")


def _extra_sink_distribution(p: SynthParams) -> np.ndarray:
    """Probabilities over extra sink counts 0..MAX_EXTRA_SINKS.

    A net always has a driver and one sink (degree 2); 'extra' is the rest.
    P(extra=j) for j >= 1 follows (j+1)^-tau; P(extra=0) is solved in closed
    form so the mean net degree comes out at mean_net_degree.
    """
    want_extra = p.mean_net_degree - 2.0
    tail = np.arange(1, MAX_EXTRA_SINKS + 1, dtype=np.float64)
    w = (tail + 1.0) ** (-p.degree_tail_exponent)
    w /= w.sum()
    tail_mean = float((tail * w).sum())
    if want_extra > tail_mean:
        raise ValueError(
            f"mean_net_degree {p.mean_net_degree} not reachable with "
            f"tail exponent {p.degree_tail_exponent} (cap {2 + tail_mean:.2f})"
        )
    q = 1.0 - want_extra / tail_mean
    probs = np.empty(MAX_EXTRA_SINKS + 1)
    probs[0] = q
    probs[1:] = (1.0 - q) * w
    return probs


def _sample_structure(p: SynthParams, rng: np.random.Generator) -> list[NetRecord]:
    n = p.n_cells
    window = max(10, n // 64)
    deg = np.zeros(n, dtype=np.float64)

    if p.mean_net_degree < 2.0:
        sizes = rng.binomial(1, p.mean_net_degree - 1.0, size=n)
    else:
        probs = _extra_sink_distribution(p)
        sizes = 1 + rng.choice(len(probs), size=n, p=probs)

    nets = []
    for i in range(n):
        lo = max(0, i - window)
        hi = min(n, i + window + 1)
        local_ids = np.arange(lo, hi)
        local_ids = local_ids[local_ids != i]
        want = int(min(sizes[i], n - 1))
        n_global = int(rng.binomial(want, GLOBAL_SINK_PROB)) if want else 0
        n_local = min(want - n_global, len(local_ids))
        n_global = want - n_local

        picked: list[int] = []
        if n_local:
            wl = deg[local_ids] + 1.0
            picked.extend(rng.choice(local_ids, size=n_local, replace=False,
                                     p=wl / wl.sum()).tolist())
        if n_global:
            wg = deg + 1.0
            wg[i] = 0.0
            wg[picked] = 0.0
            picked.extend(rng.choice(n, size=n_global, replace=False,
                                     p=wg / wg.sum()).tolist())
        deg[picked] += 1.0
        deg[i] += 1.0
        nets.append(NetRecord(i, tuple(sorted(int(s) for s in picked))))
    return nets


def planted_covariates(g: DirectedHypergraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-net (net_degree, n2) where n2 counts nets within two incidence
    hops of the net's driver."""
    net_degree = np.array([len(net.sinks) + 1 for net in g.nets], dtype=np.float64)
    nets_of = [frozenset(j for j, _ in inc) for inc in g.incidence]
    members = [frozenset((net.driver, *net.sinks)) for net in g.nets]
    n2 = np.zeros(g.n_nets, dtype=np.float64)
    for j, net in enumerate(g.nets):
        cells: set[int] = set()
        for k in nets_of[net.driver]:
            cells |= members[k]
        reach: set[int] = set()
        for c in cells:
            reach |= nets_of[c]
        n2[j] = len(reach)
    return net_degree, n2


def planted_demand(p: SynthParams, net_degree: np.ndarray, n2: np.ndarray,
                   noise: np.ndarray | None = None) -> np.ndarray:
    d = p.alpha * np.log1p(net_degree) + p.beta * n2
    if noise is not None:
        d = d + noise
    return np.maximum(d, 0.0)


def planted_hpwl_log2(p: SynthParams, net_degree: np.ndarray, n2: np.ndarray,
                      noise: np.ndarray | None = None) -> np.ndarray:
    h = p.hpwl_base + p.hpwl_alpha * np.log2(1.0 + net_degree) + p.hpwl_beta * n2
    if noise is not None:
        h = h + p.hpwl_noise_scale * noise
    return np.maximum(h, 0.1)


def quantile_congestion(g: DirectedHypergraph, demand: np.ndarray) -> np.ndarray:
    """Quantile-normalized per-cell sum of incident net demand.

    Rank division keeps the congested fraction (ratio >= 0.9) near 10%
    regardless of the demand scale; ties break by cell id via stable sort.
    """
    load = np.zeros(g.n_cells)
    for j, net in enumerate(g.nets):
        load[net.driver] += demand[j]
        for s in net.sinks:
            load[s] += demand[j]
    order = np.argsort(load, kind="stable")
    rank = np.empty(g.n_cells)
    rank[order] = np.arange(g.n_cells, dtype=np.float64)
    denom = max(g.n_cells - 1, 1)
    return rank / denom


def generate_synthetic(p: SynthParams) -> tuple[DirectedHypergraph, NetlistDoc, TargetTable]:
    rng = np.random.default_rng(p.seed)
    nets = _sample_structure(p, rng)
    cells = [
        CellRecord(
            type_tag="std",
            width=float(rng.integers(1, 9)),
            height=float(rng.choice([1.0, 2.0, 4.0])),
            orient=int(rng.integers(0, 8)),
        )
        for _ in range(p.n_cells)
    ]
    g = build(cells, nets)
    doc = NetlistDoc.dense(f"synth{p.seed}", g.n_cells, g.n_nets)

    net_degree, n2 = planted_covariates(g)
    noise = rng.standard_normal(g.n_nets) * p.noise_std
    demand = planted_demand(p, net_degree, n2, noise)
    hpwl = planted_hpwl_log2(p, net_degree, n2, noise)
    congestion = quantile_congestion(g, demand)
    targets = TargetTable(hpwl_log2=hpwl, demand=demand, congestion=congestion)
    return g, doc, targets


def noise_for_r2_ceiling(p: SynthParams, r2: float = 0.95) -> float:
    """noise_std making the noise-free demand signal explain fraction r2
    of the noisy target variance (Var(signal)/(Var(signal)+std^2) = r2)."""
    if not 0.0 < r2 < 1.0:
        raise ValueError("r2 must lie in (0, 1)")
    clean = SynthParams(**{**p.__dict__, "noise_std": 0.0})
    g, _, t = generate_synthetic(clean)
    var = float(np.var(t.demand))
    return math.sqrt(var * (1.0 - r2) / r2)
