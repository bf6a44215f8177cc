"""Directed hypergraph network: layer stack, ablation variants, heads.

Per layer, node features accumulate transformed messages from incident
nets plus a residual (plus a part-level virtual-node term when those are
active); net features rebuild from the driver embedding concatenated
with a permutation-invariant sink sum (the direction-ablated variant
pools driver and sinks together instead). Virtual nodes form a two-level
hierarchy: per-part features fed by member means, and a super node fed
by the part mean. Net-level tasks update node -> vn -> net inside a
layer; node-level tasks run the dual order net -> vn -> node.

All aggregation happens through value-canonical segment sums, so outputs
are bitwise invariant to net order, sink order, and consistent
relabeling of the input file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FeatureTable
from .hypergraph import DirectedHypergraph
from .nn import Mlp, load_checkpoint, save_checkpoint
from .partition import VnHierarchy
from .tensor import (
    Tensor,
    concat_cols,
    gather_rows,
    mean_rows,
    mse_loss,
    scale_rows,
    segment_sum,
    softmax_xent_loss,
    tensor,
)

VARIANTS = ("EHNN", "BASE", "BASE_PD", "BASE_PD_SVN", "FULL")
TASKS = ("NET_REGRESSION", "NODE_REGRESSION", "NODE_CLASSIFICATION")

VN_NONE, VN_SINGLE, VN_HIER = "none", "single", "hier"


class VariantMismatch(ValueError):
    """Virtual-node state requested by a variant that does not carry it."""


class EmptyMask(ValueError):
    """Loss asked for with no selected targets."""


@dataclass
class ModelConfig:
    layers: int = 3
    dim: int = 64
    variant: str = "FULL"
    task: str = "NET_REGRESSION"
    mlp_depth: int = 2

    def __post_init__(self) -> None:
        if self.layers < 1 or self.dim < 1:
            raise ValueError("layers and dim must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.mlp_depth < 1:
            raise ValueError("mlp_depth must be >= 1")

    @property
    def directed(self) -> bool:
        return self.variant != "EHNN"

    @property
    def uses_pd(self) -> bool:
        return self.variant in ("BASE_PD", "BASE_PD_SVN", "FULL")

    @property
    def vn_mode(self) -> str:
        if self.variant == "FULL":
            return VN_HIER
        if self.variant == "BASE_PD_SVN":
            return VN_SINGLE
        return VN_NONE

    @property
    def out_dim(self) -> int:
        return 2 if self.task == "NODE_CLASSIFICATION" else 1

    @property
    def net_level(self) -> bool:
        return self.task == "NET_REGRESSION"


@dataclass
class LayerState:
    node: Tensor
    net: Tensor
    vn1: Tensor | None = None
    vn0: Tensor | None = None


@dataclass
class Incidence:
    """Index arrays driving the gathers and segment sums for one graph."""

    n_cells: int
    n_nets: int
    pair_cell: np.ndarray     # one entry per (cell, net) membership
    pair_net: np.ndarray
    driver: np.ndarray        # per net
    sink_cell: np.ndarray     # one entry per (sink, net) membership
    sink_net: np.ndarray
    member_cell: np.ndarray   # sinks plus driver, per net
    member_net: np.ndarray


def incidence_arrays(g: DirectedHypergraph) -> Incidence:
    pair_cell, pair_net = [], []
    for v, inc in enumerate(g.incidence):
        for j, _ in inc:
            pair_cell.append(v)
            pair_net.append(j)
    driver = np.array([n.driver for n in g.nets], dtype=np.int64)
    sink_cell, sink_net = [], []
    for j, net in enumerate(g.nets):
        for s in net.sinks:
            sink_cell.append(s)
            sink_net.append(j)
    member_cell = sink_cell + [int(d) for d in driver]
    member_net = sink_net + list(range(g.n_nets))
    as_idx = lambda xs: np.array(xs, dtype=np.int64)
    return Incidence(
        n_cells=g.n_cells, n_nets=g.n_nets,
        pair_cell=as_idx(pair_cell), pair_net=as_idx(pair_net),
        driver=driver,
        sink_cell=as_idx(sink_cell), sink_net=as_idx(sink_net),
        member_cell=as_idx(member_cell), member_net=as_idx(member_net),
    )


def consumed_features(table: FeatureTable, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Select the feature columns a variant actually reads."""
    keep = []
    off = 0
    for name, width in table.cell_blocks:
        if name == "pd_image" and not config.uses_pd:
            off += width
            continue
        keep.append(table.cell[:, off:off + width])
        off += width
    if config.uses_pd and not any(n == "pd_image" for n, _ in table.cell_blocks):
        raise ValueError("variant needs a pd_image feature block and the table has none")
    cell = np.column_stack(keep) if len(keep) > 1 else keep[0]
    return cell, table.net


@dataclass
class ModelParams:
    blocks: dict[str, Mlp] = field(default_factory=dict)

    def all_params(self) -> list[Tensor]:
        out = []
        for name in sorted(self.blocks):
            out.extend(self.blocks[name].params)
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.all_params()}


def init_params(config: ModelConfig, cell_width: int, net_width: int,
                rng: np.random.Generator) -> ModelParams:
    d, depth = config.dim, config.mlp_depth
    blocks: dict[str, Mlp] = {
        "enc_cell": Mlp(cell_width, d, rng, depth=1, name="enc_cell"),
        "enc_net": Mlp(net_width, d, rng, depth=1, name="enc_net"),
        "head": Mlp(d, config.out_dim, rng, depth=1, name="head"),
    }
    for i in range(config.layers):
        blocks[f"l{i}.mlp1"] = Mlp(d, d, rng, depth=depth, name=f"l{i}.mlp1")
        blocks[f"l{i}.mlp2"] = Mlp(d, d, rng, depth=depth, name=f"l{i}.mlp2")
        net_in = 2 * d if config.directed else d
        blocks[f"l{i}.mlp3"] = Mlp(net_in, d, rng, depth=depth, name=f"l{i}.mlp3")
        if config.vn_mode != VN_NONE:
            blocks[f"l{i}.down"] = Mlp(d, d, rng, depth=depth, name=f"l{i}.down")
            up1_in = 3 * d if config.vn_mode == VN_HIER else 2 * d
            blocks[f"l{i}.up1"] = Mlp(up1_in, d, rng, depth=depth, name=f"l{i}.up1")
            if config.vn_mode == VN_HIER:
                blocks[f"l{i}.up0"] = Mlp(2 * d, d, rng, depth=depth, name=f"l{i}.up0")
    return ModelParams(blocks=blocks)


def node_update(state: LayerState, inc: Incidence, mlp1: Mlp,
                down: Mlp | None, part_of: np.ndarray | None) -> Tensor:
    """Sum of transformed incident-net features, residual, optional VN term."""
    msgs = mlp1(state.net)
    agg = segment_sum(gather_rows(msgs, inc.pair_net), inc.pair_cell, inc.n_cells)
    out = agg.add(state.node)
    if down is not None:
        if state.vn1 is None or part_of is None:
            raise VariantMismatch("node update got a VN block without VN state")
        out = out.add(gather_rows(down(state.vn1), part_of))
    return out


def net_update(state: LayerState, inc: Incidence, mlp2: Mlp, mlp3: Mlp,
               directed: bool) -> Tensor:
    transformed = mlp2(state.node)
    if directed:
        sink_sum = segment_sum(gather_rows(transformed, inc.sink_cell),
                               inc.sink_net, inc.n_nets)
        drv = gather_rows(state.node, inc.driver)
        body = mlp3(concat_cols([drv, sink_sum]))
    else:
        member_sum = segment_sum(gather_rows(transformed, inc.member_cell),
                                 inc.member_net, inc.n_nets)
        body = mlp3(member_sum)
    return body.add(state.net)


def vn_update(state: LayerState, vn: VnHierarchy, up1: Mlp, up0: Mlp | None,
              part_counts: np.ndarray) -> tuple[Tensor, Tensor | None]:
    if state.vn1 is None:
        raise VariantMismatch("vn update on a variant with no VN state")
    part_of = np.asarray(vn.part_of, dtype=np.int64)
    sums = segment_sum(state.node, part_of, vn.k)
    means = scale_rows(sums, 1.0 / part_counts)
    if up0 is not None:
        if state.vn0 is None:
            raise VariantMismatch("hierarchical vn update needs a super-node state")
        vn0_rows = gather_rows(state.vn0, np.zeros(vn.k, dtype=np.int64))
        vn1 = up1(concat_cols([means, state.vn1, vn0_rows]))
        vn0 = up0(concat_cols([mean_rows(vn1), state.vn0]))
        return vn1, vn0
    vn1 = up1(concat_cols([means, state.vn1]))
    return vn1, None


class Model:
    """Bundles config, parameters, and the per-graph forward pass."""

    def __init__(self, config: ModelConfig, params: ModelParams):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, table: FeatureTable, seed=0) -> "Model":
        cell, net = consumed_features(table, config)
        rng = np.random.default_rng(seed)
        return cls(config, init_params(config, cell.shape[1], net.shape[1], rng))

    def forward(self, g: DirectedHypergraph, table: FeatureTable,
                vn: VnHierarchy | None = None,
                inc: Incidence | None = None) -> Tensor:
        cfg = self.config
        if cfg.vn_mode != VN_NONE and vn is None:
            raise VariantMismatch(f"variant {cfg.variant} needs a VN hierarchy")
        if cfg.vn_mode == VN_SINGLE and vn is not None and vn.k != 1:
            raise VariantMismatch("single-VN variant requires k=1")
        inc = inc if inc is not None else incidence_arrays(g)
        blocks = self.params.blocks
        cellX, netX = consumed_features(table, cfg)
        state = LayerState(
            node=blocks["enc_cell"](tensor(cellX)),
            net=blocks["enc_net"](tensor(netX)),
        )
        part_of = None
        part_counts = None
        if cfg.vn_mode != VN_NONE:
            part_of = np.asarray(vn.part_of, dtype=np.int64)
            part_counts = np.bincount(part_of, minlength=vn.k).astype(np.float64)
            state.vn1 = tensor(np.zeros((vn.k, cfg.dim)))
            if cfg.vn_mode == VN_HIER:
                state.vn0 = tensor(np.zeros((1, cfg.dim)))

        for i in range(cfg.layers):
            mlp1, mlp2, mlp3 = blocks[f"l{i}.mlp1"], blocks[f"l{i}.mlp2"], blocks[f"l{i}.mlp3"]
            down = blocks.get(f"l{i}.down")
            up1 = blocks.get(f"l{i}.up1")
            up0 = blocks.get(f"l{i}.up0")

            def run_vn() -> None:
                if cfg.vn_mode != VN_NONE:
                    vn1, vn0 = vn_update(state, vn, up1, up0, part_counts)
                    state.vn1 = vn1
                    if vn0 is not None:
                        state.vn0 = vn0

            if cfg.net_level:
                state.node = node_update(state, inc, mlp1, down, part_of)
                run_vn()
                state.net = net_update(state, inc, mlp2, mlp3, cfg.directed)
            else:
                state.net = net_update(state, inc, mlp2, mlp3, cfg.directed)
                run_vn()
                state.node = node_update(state, inc, mlp1, down, part_of)

        final = state.net if cfg.net_level else state.node
        return blocks["head"](final)

    def loss(self, outputs: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
        return loss(outputs, targets, mask, self.config.task)

    def save(self, path: str, extra: dict | None = None) -> None:
        cfg = self.config
        meta = {"layers": cfg.layers, "dim": cfg.dim, "variant": cfg.variant,
                "task": cfg.task, "mlp_depth": cfg.mlp_depth,
                "shapes": {p.name: list(p.data.shape) for p in self.params.all_params()}}
        if extra:
            meta["extra"] = extra
        save_checkpoint(path, meta, self.params.named_arrays())

    @classmethod
    def load(cls, path: str) -> "Model":
        meta, arrays = load_checkpoint(path)
        config = ModelConfig(layers=meta["layers"], dim=meta["dim"],
                             variant=meta["variant"], task=meta["task"],
                             mlp_depth=meta["mlp_depth"])
        shapes = meta["shapes"]
        enc_cell_w = shapes["enc_cell.w0"]
        enc_net_w = shapes["enc_net.w0"]
        rng = np.random.default_rng(0)
        params = init_params(config, int(enc_cell_w[0]), int(enc_net_w[0]), rng)
        for p in params.all_params():
            stored = arrays[p.name]
            if stored.shape != p.data.shape:
                raise ValueError(f"checkpoint shape mismatch for {p.name}")
            p.data = stored
        return cls(config, params)


def loss(outputs: Tensor, targets: np.ndarray, mask: np.ndarray, task: str) -> Tensor:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise EmptyMask("no targets selected")
    picked = gather_rows(outputs, mask)
    if task == "NODE_CLASSIFICATION":
        return softmax_xent_loss(picked, np.asarray(targets)[mask].astype(np.int64))
    t = np.asarray(targets, dtype=np.float64)[mask].reshape(-1, 1)
    return mse_loss(picked, t)
