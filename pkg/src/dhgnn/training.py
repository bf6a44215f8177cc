"""Folds, the training loop, metrics, and the ablation driver.

Training is transductive: every epoch runs one forward pass over the
whole design, the loss is masked to the train indices, and early
stopping watches the val indices. Regression targets are z-scored with
train-mask statistics for optimization and mapped back before any
metric is computed, so reported numbers stay in target units
(log2-wirelength space and raw demand space respectively).
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, config_dict
from .features import FeatureTable, assemble_features
from .hypergraph import DirectedHypergraph
from .model import VARIANTS, Incidence, Model, ModelConfig, incidence_arrays
from .netlist import TargetTable, parse_netlist, parse_targets
from .nn import Adam
from .partition import VnHierarchy, build_vn_hierarchy, choose_k, expand_weights, partition


class TooFewTargets(ValueError):
    pass


class TooFewDesigns(ValueError):
    pass


@dataclass
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_folds(n_targets: int, seed: int) -> list[Fold]:
    """Seeded shuffle, contiguous quartering, 10% of each fold's remainder
    carved out for early stopping."""
    if n_targets < 4:
        raise TooFewTargets(f"need at least 4 targets, got {n_targets}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_targets)
    quarters = np.array_split(perm, 4)
    folds = []
    for f in range(4):
        rest = np.concatenate([quarters[q] for q in range(4) if q != f])
        n_val = max(1, int(round(0.1 * len(rest))))
        folds.append(Fold(train=rest[n_val:], val=rest[:n_val], test=quarters[f]))
    return folds


@dataclass
class MetricsRecord:
    split: str
    fold: int
    epoch: int
    rmse: float | None = None
    mae: float | None = None
    pearson: float | None = None
    pearson_undefined: bool = False
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    wall_clock: float = 0.0

    def stream_dict(self) -> dict:
        """Fields written to the metric stream. Wall-clock time goes to a
        separate timings file: the stream must be bitwise reproducible."""
        d = {"split": self.split, "fold": self.fold, "epoch": self.epoch,
             "rmse": self.rmse, "mae": self.mae, "pearson": self.pearson,
             "pearson_undefined": self.pearson_undefined,
             "precision": self.precision, "recall": self.recall, "f1": self.f1}
        return d

    def to_json(self) -> str:
        return json.dumps(self.stream_dict(), sort_keys=True)


def evaluate(outputs: np.ndarray, targets: np.ndarray, mask: np.ndarray,
             task: str, split: str = "test", fold: int = 0,
             epoch: int = 0) -> MetricsRecord:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty evaluation mask")
    rec = MetricsRecord(split=split, fold=fold, epoch=epoch)
    if task == "NODE_CLASSIFICATION":
        pred = np.argmax(outputs[mask], axis=1)
        true = np.asarray(targets)[mask].astype(np.int64)
        tp = float(np.sum((pred == 1) & (true == 1)))
        fp = float(np.sum((pred == 1) & (true == 0)))
        fn = float(np.sum((pred == 0) & (true == 1)))
        rec.precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec.recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        denom = rec.precision + rec.recall
        rec.f1 = 2.0 * rec.precision * rec.recall / denom if denom > 0 else 0.0
        return rec
    pred = np.asarray(outputs, dtype=np.float64).reshape(-1)[mask]
    true = np.asarray(targets, dtype=np.float64)[mask]
    err = pred - true
    rec.rmse = float(np.sqrt(np.mean(err * err)))
    rec.mae = float(np.mean(np.abs(err)))
    ps, ts = pred.std(), true.std()
    if ps == 0.0 or ts == 0.0:
        rec.pearson = None
        rec.pearson_undefined = True
    else:
        rec.pearson = float(np.mean((pred - pred.mean()) * (true - true.mean())) / (ps * ts))
    return rec


def cross_design_split(designs: list) -> tuple[list, list, list]:
    if len(designs) < 3:
        raise TooFewDesigns(f"need at least 3 designs, got {len(designs)}")
    return list(designs[:-2]), [designs[-2]], [designs[-1]]


@dataclass
class Prepared:
    g: DirectedHypergraph
    table: FeatureTable
    vn: VnHierarchy | None
    inc: Incidence
    targets: np.ndarray
    mask: np.ndarray


def select_target(tt: TargetTable, run: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    if run.target == "demand":
        return tt.demand, tt.net_mask()
    if run.target == "hpwl":
        return tt.hpwl_log2, tt.net_mask()
    if run.task == "NODE_CLASSIFICATION":
        return tt.congested_labels().astype(np.float64), tt.cell_mask()
    return tt.congestion, tt.cell_mask()


def prepare(run: RunConfig, g: DirectedHypergraph, tt: TargetTable,
            table: FeatureTable | None = None) -> Prepared:
    if table is None:
        table = assemble_features(g, **run.feature_kwargs())
    vn = None
    cfg = model_config(run)
    if cfg.vn_mode != "none":
        k = 1 if cfg.vn_mode == "single" else choose_k(g.n_cells, run.partition_target)
        part = partition(expand_weights(g), k, epsilon=run.epsilon, seed=run.seed)
        vn = build_vn_hierarchy(g, part)
    targets, mask = select_target(tt, run)
    return Prepared(g=g, table=table, vn=vn, inc=incidence_arrays(g),
                    targets=targets, mask=mask)


def load_design(run: RunConfig) -> tuple[DirectedHypergraph, TargetTable]:
    with open(run.netlist, encoding="utf-8") as f:
        g, doc = parse_netlist(f)
    with open(run.targets, encoding="utf-8") as f:
        tt = parse_targets(f, g, doc)
    return g, tt


def model_config(run: RunConfig) -> ModelConfig:
    return ModelConfig(layers=run.layers, dim=run.dim, variant=run.variant,
                       task=run.task, mlp_depth=run.mlp_depth)


@dataclass
class FoldResult:
    fold: int
    best_epoch: int
    records: list[MetricsRecord]
    test: MetricsRecord
    model: Model
    wall_clock: float
    train_losses: list[float] = field(default_factory=list)
    # raw-unit predictions and targets at the test ids, kept for reporting
    test_pred: np.ndarray | None = None
    test_true: np.ndarray | None = None
    # train-mask z-scale, stored with the checkpoint so a reloaded model's
    # outputs can be mapped back to target units
    mu: float = 0.0
    sigma: float = 1.0


def train_fold(run: RunConfig, prep: Prepared, fold_idx: int, fold: Fold) -> FoldResult:
    started = time.perf_counter()
    cfg = model_config(run)
    classification = run.task == "NODE_CLASSIFICATION"
    model = Model.init(cfg, prep.table, seed=(run.seed, fold_idx))

    train_ids = prep.mask[fold.train]
    val_ids = prep.mask[fold.val]
    test_ids = prep.mask[fold.test]

    if classification:
        mu, sigma = 0.0, 1.0
        fit_targets = prep.targets
    else:
        mu = float(np.mean(prep.targets[train_ids]))
        sigma = float(np.std(prep.targets[train_ids]))
        if sigma == 0.0:
            sigma = 1.0
        fit_targets = (prep.targets - mu) / sigma

    opt = Adam(model.params.all_params(), lr=run.lr)
    records: list[MetricsRecord] = []
    train_losses: list[float] = []
    best_val = math.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {}

    for epoch in range(1, run.epochs + 1):
        out = model.forward(prep.g, prep.table, prep.vn, prep.inc)
        l = model.loss(out, fit_targets, train_ids)
        opt.zero_grad()
        l.backward()
        opt.step()
        train_losses.append(l.item())

        raw = out.data if classification else out.data.reshape(-1) * sigma + mu
        records.append(evaluate(raw, prep.targets, train_ids, run.task,
                                split="train", fold=fold_idx, epoch=epoch))
        records.append(evaluate(raw, prep.targets, val_ids, run.task,
                                split="val", fold=fold_idx, epoch=epoch))

        if classification:
            val_loss = -records[-1].f1
        else:
            verr = out.data.reshape(-1)[val_ids] - fit_targets[val_ids]
            val_loss = float(np.mean(verr * verr))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {p.name: p.data.copy() for p in model.params.all_params()}
        if epoch - best_epoch >= run.patience:
            break

    for p in model.params.all_params():
        p.data = best_params[p.name]
    out = model.forward(prep.g, prep.table, prep.vn, prep.inc)
    raw = out.data if classification else out.data.reshape(-1) * sigma + mu
    test_rec = evaluate(raw, prep.targets, test_ids, run.task,
                        split="test", fold=fold_idx, epoch=best_epoch)
    records.append(test_rec)
    wall = time.perf_counter() - started
    test_rec.wall_clock = wall
    if classification:
        test_pred = np.argmax(raw[test_ids], axis=1).astype(np.float64)
    else:
        test_pred = raw.reshape(-1)[test_ids].copy()
    return FoldResult(fold=fold_idx, best_epoch=best_epoch, records=records,
                      test=test_rec, model=model, wall_clock=wall,
                      train_losses=train_losses, test_pred=test_pred,
                      test_true=prep.targets[test_ids].copy(), mu=mu, sigma=sigma)


def train(run: RunConfig, g: DirectedHypergraph | None = None,
          tt: TargetTable | None = None,
          table: FeatureTable | None = None,
          out_dir: str | None = None) -> list[FoldResult]:
    if g is None or tt is None:
        run.require_paths()
        g, tt = load_design(run)
    prep = prepare(run, g, tt, table)
    folds = make_folds(len(prep.mask), run.seed)
    results = [train_fold(run, prep, i, fold) for i, fold in enumerate(folds)]
    if out_dir is not None:
        write_run_outputs(run, results, out_dir)
    return results


def write_metric_stream(records: list[MetricsRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")


def write_run_outputs(run: RunConfig, results: list[FoldResult], out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    stream = [rec for res in results for rec in res.records]
    write_metric_stream(stream, os.path.join(out_dir, "metrics.ndjson"))
    with open(os.path.join(out_dir, "timings.tsv"), "w", encoding="utf-8") as f:
        f.write("fold\twall_clock_seconds\n")
        for res in results:
            f.write(f"{res.fold}\t{res.wall_clock:.3f}\n")
    with open(os.path.join(out_dir, "summary.tsv"), "w", encoding="utf-8") as f:
        cols = ["fold", "best_epoch", "rmse", "mae", "pearson", "precision",
                "recall", "f1"]
        f.write("\t".join(cols) + "\n")
        for res in results:
            t = res.test
            row = [str(res.fold), str(res.best_epoch)]
            for name in cols[2:]:
                v = getattr(t, name)
                row.append("" if v is None else f"{v:.6g}")
            f.write("\t".join(row) + "\n")
    meta = {"config": config_dict(run),
            "features": run.feature_kwargs(),
            "partition": {"target": run.partition_target,
                          "epsilon": run.epsilon, "seed": run.seed}}
    for res in results:
        fold_meta = dict(meta, scale={"mu": res.mu, "sigma": res.sigma})
        res.model.save(os.path.join(out_dir, f"fold{res.fold}.ckpt"),
                       extra=fold_meta)


def mean_test_rmse(results: list[FoldResult]) -> float:
    return float(np.mean([res.test.rmse for res in results]))


@dataclass
class AblationRow:
    variant: str
    per_seed_rmse: list[float]
    mean_rmse: float
    std_rmse: float
    improvement_pct: float | None  # vs the previous variant in the ladder


def ablation_suite(run: RunConfig, g: DirectedHypergraph, tt: TargetTable,
                   seeds: tuple = (0, 1, 2, 3, 4),
                   variants: tuple = VARIANTS) -> list[AblationRow]:
    """Run every variant over the given seeds on a shared feature table.

    Folds depend only on (target count, seed), so identical seeds see
    identical folds across variants.
    """
    base = config_dict(run)
    # one shared table carrying every block any ladder variant consumes
    shared = dict(run.feature_kwargs())
    shared["pd"] = shared["pd"] or any(
        v in ("BASE_PD", "BASE_PD_SVN", "FULL") for v in variants)
    table = assemble_features(g, **shared)
    rows: list[AblationRow] = []
    prev_mean: float | None = None
    for variant in variants:
        per_seed = []
        for seed in seeds:
            cfg = dict(base)
            cfg.update(variant=variant, seed=int(seed),
                       pd=base["pd"] or variant in ("BASE_PD", "BASE_PD_SVN", "FULL"))
            v_run = RunConfig(**cfg)
            per_seed.append(mean_test_rmse(train(v_run, g, tt, table)))
        mean = float(np.mean(per_seed))
        std = float(np.std(per_seed))
        imp = None if prev_mean is None else (prev_mean - mean) / prev_mean * 100.0
        rows.append(AblationRow(variant=variant, per_seed_rmse=per_seed,
                                mean_rmse=mean, std_rmse=std, improvement_pct=imp))
        prev_mean = mean
    return rows


def write_ablation_table(rows: list[AblationRow], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("variant\tmean_rmse\tstd_rmse\timprovement_pct\tper_seed\n")
        for row in rows:
            imp = "" if row.improvement_pct is None else f"{row.improvement_pct:.3f}"
            seeds = ",".join(f"{v:.6g}" for v in row.per_seed_rmse)
            f.write(f"{row.variant}\t{row.mean_rmse:.6g}\t{row.std_rmse:.6g}"
                    f"\t{imp}\t{seeds}\n")
