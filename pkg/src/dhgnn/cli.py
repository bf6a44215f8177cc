"""Command-line surface.

Subcommands cover the full pipeline: generate a synthetic design, build
feature matrices, partition the cell graph, train with 4-fold cross
validation, evaluate a saved checkpoint on a design, run the variant
ablation ladder, and gradient-check a model configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .features import assemble_features, write_feature_matrix
from .model import VARIANTS, Model
from .netlist import (NetlistSyntaxError, parse_netlist, serialize_netlist,
                      serialize_targets)
from .nn import grad_check, load_checkpoint
from .partition import choose_k, expand_weights, partition, write_partition_file
from .report import render_ablation_figure, render_run_figures
from .synth import SynthParams, generate_synthetic, noise_for_r2_ceiling
from .training import (ablation_suite, evaluate, load_design, mean_test_rmse,
                       model_config, prepare, train, write_ablation_table)

PD_VARIANTS = ("BASE_PD", "BASE_PD_SVN", "FULL")


def _load_netlist(path: str):
    with open(path, encoding="utf-8") as f:
        return parse_netlist(f)


def cmd_generate(args) -> int:
    p = SynthParams(n_cells=args.n_cells, seed=args.seed,
                    mean_net_degree=args.mean_net_degree,
                    degree_tail_exponent=args.tail_exponent,
                    alpha=args.alpha, beta=args.beta,
                    noise_std=args.noise_std)
    if args.r2_ceiling is not None:
        p = dataclasses.replace(p, noise_std=noise_for_r2_ceiling(p, args.r2_ceiling))
    g, doc, tt = generate_synthetic(p)
    net_path = args.out + ".net"
    tgt_path = args.out + ".tgt"
    with open(net_path, "w", encoding="utf-8") as f:
        f.write(serialize_netlist(g, doc))
    with open(tgt_path, "w", encoding="utf-8") as f:
        f.write(serialize_targets(tt, doc))
    print(f"wrote {net_path}: {g.n_cells} cells, {g.n_nets} nets")
    print(f"wrote {tgt_path}: noise_std={p.noise_std:.6g}")
    return 0


def cmd_features(args) -> int:
    g, _ = _load_netlist(args.netlist)
    table = assemble_features(g, pd=args.pd, lappe=args.lappe,
                              deg_dist=args.deg_dist, k_hops=args.k_hops,
                              image_res=args.image_res, pe_dim=args.pe_dim,
                              pe_seed=args.pe_seed)
    write_feature_matrix(table, args.out)
    print(f"cell matrix {table.cell.shape[0]}x{table.cell.shape[1]}, "
          f"net matrix {table.net.shape[0]}x{table.net.shape[1]}")
    for kind, blocks in (("cell", table.cell_blocks), ("net", table.net_blocks)):
        for name, width in blocks:
            print(f"  {kind} {name} {width}")
    print(f"wrote {args.out} (+ .nets, .blocks.txt)")
    return 0


def cmd_partition(args) -> int:
    g, _ = _load_netlist(args.netlist)
    k = args.k if args.k is not None else choose_k(g.n_cells, args.target_size)
    part = partition(expand_weights(g), k, epsilon=args.eps, seed=args.seed)
    write_partition_file(args.out, part)
    sizes = np.bincount(part.part_of, minlength=part.k).tolist()
    print(f"k={part.k} cut={part.cut:.6g} sizes={sizes}")
    print(f"wrote {args.out}")
    return 0


def _print_fold_summaries(results, classification: bool) -> None:
    for res in results:
        t = res.test
        if classification:
            print(f"fold {res.fold}: best_epoch={res.best_epoch} "
                  f"precision={t.precision:.4f} recall={t.recall:.4f} "
                  f"f1={t.f1:.4f}")
        else:
            pearson = "undefined" if t.pearson is None else f"{t.pearson:.4f}"
            print(f"fold {res.fold}: best_epoch={res.best_epoch} "
                  f"rmse={t.rmse:.4g} mae={t.mae:.4g} pearson={pearson}")


def cmd_train(args) -> int:
    run = load_config(args.config)
    run.require_paths()
    out_dir = args.out_dir if args.out_dir else run.out_dir
    results = train(run, out_dir=out_dir)
    render_run_figures(results, out_dir)
    classification = run.task == "NODE_CLASSIFICATION"
    _print_fold_summaries(results, classification)
    if not classification:
        print(f"mean test rmse: {mean_test_rmse(results):.6g}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_eval(args) -> int:
    meta, _ = load_checkpoint(args.checkpoint)
    extra = meta.get("extra")
    if not extra or "config" not in extra:
        raise ConfigError("checkpoint carries no run metadata; "
                          "train with the train subcommand to evaluate later")
    cfg = dict(extra["config"])
    cfg["netlist"] = args.netlist
    cfg["targets"] = args.targets
    run = RunConfig(**cfg)
    run.require_paths()
    g, tt = load_design(run)
    prep = prepare(run, g, tt)
    model = Model.load(args.checkpoint)
    out = model.forward(prep.g, prep.table, prep.vn, prep.inc)
    scale = extra.get("scale", {"mu": 0.0, "sigma": 1.0})
    if run.task == "NODE_CLASSIFICATION":
        raw = out.data
    else:
        raw = out.data.reshape(-1) * scale["sigma"] + scale["mu"]
    rec = evaluate(raw, prep.targets, prep.mask, run.task, split="eval")
    line = rec.to_json()
    print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(line + "\n")
    return 0


def cmd_ablate(args) -> int:
    run = load_config(args.config)
    run.require_paths()
    g, tt = load_design(run)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    variants = tuple(args.variants.split(",")) if args.variants else VARIANTS
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    rows = ablation_suite(run, g, tt, seeds=seeds, variants=variants)
    out_dir = args.out_dir if args.out_dir else run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    write_ablation_table(rows, os.path.join(out_dir, "ablation.tsv"))
    render_ablation_figure(rows, os.path.join(out_dir, "ablation.png"))
    for row in rows:
        imp = "" if row.improvement_pct is None else f"  ({row.improvement_pct:+.2f}% vs previous)"
        print(f"{row.variant}: rmse {row.mean_rmse:.6g} +/- {row.std_rmse:.6g}{imp}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    task = "NODE_CLASSIFICATION" if args.classification else "NET_REGRESSION"
    g, _, tt = generate_synthetic(SynthParams(n_cells=args.n_cells,
                                              seed=args.seed, noise_std=0.1))
    run = RunConfig(task=task,
                    target="congestion" if args.classification else "demand",
                    variant=args.variant, seed=args.seed, layers=args.layers,
                    dim=args.dim, mlp_depth=args.mlp_depth,
                    pd=args.variant in PD_VARIANTS, lappe=False, deg_dist=False,
                    k_hops=1, image_res=2,
                    partition_target=max(2, args.n_cells // 3))
    prep = prepare(run, g, tt)
    model = Model.init(model_config(run), prep.table, seed=args.seed)

    def build_loss():
        out = model.forward(prep.g, prep.table, prep.vn, prep.inc)
        return model.loss(out, prep.targets, prep.mask)

    report = grad_check(build_loss, model.params.all_params(), tol=args.tolerance)
    print(report)
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dhgnn")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic netlist and targets")
    g.add_argument("--n-cells", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mean-net-degree", type=float, default=3.5)
    g.add_argument("--tail-exponent", type=float, default=2.0)
    g.add_argument("--alpha", type=float, default=2.0)
    g.add_argument("--beta", type=float, default=0.12)
    g.add_argument("--noise-std", type=float, default=0.3)
    g.add_argument("--r2-ceiling", type=float, default=None,
                   help="tune noise so the noise-free R2 ceiling equals this")
    g.add_argument("--out", required=True, help="path stem for .net and .tgt")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("features", help="assemble and write a feature matrix")
    f.add_argument("--netlist", required=True)
    f.add_argument("--pd", action="store_true")
    f.add_argument("--lappe", action="store_true")
    f.add_argument("--deg-dist", action="store_true")
    f.add_argument("--k-hops", type=int, default=6)
    f.add_argument("--image-res", type=int, default=8)
    f.add_argument("--pe-dim", type=int, default=10)
    f.add_argument("--pe-seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_features)

    p = sub.add_parser("partition", help="balanced k-way partition of the cells")
    p.add_argument("--netlist", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--target-size", type=int, default=1000,
                   help="pick k from this part size when --k is not given")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    t = sub.add_parser("train", help="4-fold cross-validated training run")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a design")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--netlist", required=True)
    e.add_argument("--targets", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="variant ladder over seeds")
    a.add_argument("--config", required=True)
    a.add_argument("--seeds", default="0,1,2,3,4")
    a.add_argument("--variants", default=None)
    a.add_argument("--out-dir", default=None)
    a.set_defaults(func=cmd_ablate)

    c = sub.add_parser("gradcheck", help="finite-difference check of a model")
    c.add_argument("--variant", default="FULL", choices=VARIANTS)
    c.add_argument("--layers", type=int, default=2)
    c.add_argument("--dim", type=int, default=8)
    c.add_argument("--mlp-depth", type=int, default=2)
    c.add_argument("--n-cells", type=int, default=12)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.add_argument("--classification", action="store_true")
    c.set_defaults(func=cmd_gradcheck)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NetlistSyntaxError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
