"""Figure rendering for training runs and ablation ladders.

Everything here draws with the Agg backend and writes PNG files next to
the delimited outputs, so runs on headless machines behave the same as
runs on a desktop.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .training import AblationRow, FoldResult


def _series(res: FoldResult, split: str, field: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-epoch values of one metric field for one split of a fold."""
    pairs = [(r.epoch, getattr(r, field)) for r in res.records
             if r.split == split and getattr(r, field) is not None]
    if not pairs:
        return np.empty(0), np.empty(0)
    ep, vals = zip(*pairs)
    return np.asarray(ep), np.asarray(vals, dtype=np.float64)


def _is_classification(results: list[FoldResult]) -> bool:
    return results[0].test.rmse is None


def render_training_curves(results: list[FoldResult], path: str) -> None:
    """One panel per fold: train and val curves over epochs, with the
    early-stopping epoch marked.

    Regression folds show RMSE in target units; classification folds
    show the class-1 F1 score.
    """
    field = "f1" if _is_classification(results) else "rmse"
    ncols = 2
    nrows = (len(results) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(5.0 * ncols, 3.2 * nrows),
                             squeeze=False)
    for i, res in enumerate(results):
        ax = axes[i // ncols][i % ncols]
        for split, color in (("train", "C0"), ("val", "C1")):
            ep, vals = _series(res, split, field)
            if ep.size:
                ax.plot(ep, vals, color=color, label=split)
        ax.axvline(res.best_epoch, color="0.6", linestyle="--", linewidth=1.0,
                   label="best epoch")
        ax.set_title(f"fold {res.fold}")
        ax.set_xlabel("epoch")
        ax.set_ylabel(field)
        if i == 0:
            ax.legend(fontsize=8)
    for j in range(len(results), nrows * ncols):
        axes[j // ncols][j % ncols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_test_scatter(results: list[FoldResult], path: str) -> None:
    """Predicted vs true values on every fold's held-out nets or cells."""
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    lo, hi = np.inf, -np.inf
    for res in results:
        if res.test_pred is None or res.test_true is None:
            continue
        ax.scatter(res.test_true, res.test_pred, s=12, alpha=0.6,
                   color=f"C{res.fold}", label=f"fold {res.fold}")
        if res.test_true.size:
            lo = min(lo, res.test_true.min(), res.test_pred.min())
            hi = max(hi, res.test_true.max(), res.test_pred.max())
    if np.isfinite(lo) and np.isfinite(hi):
        ax.plot([lo, hi], [lo, hi], color="0.4", linewidth=1.0, linestyle="--")
    ax.set_xlabel("true")
    ax.set_ylabel("predicted")
    ax.set_title("held-out fit")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_test_metrics(results: list[FoldResult], path: str) -> None:
    """Grouped bars of precision, recall, and F1 on each fold's test split."""
    names = ("precision", "recall", "f1")
    x = np.arange(len(results), dtype=np.float64)
    width = 0.25
    fig, ax = plt.subplots(figsize=(1.6 * len(results) + 3.0, 3.6))
    for j, name in enumerate(names):
        vals = [getattr(res.test, name) or 0.0 for res in results]
        ax.bar(x + (j - 1) * width, vals, width, label=name, color=f"C{j}")
    ax.set_xticks(x)
    ax.set_xticklabels([f"fold {res.fold}" for res in results])
    ax.set_ylim(0.0, 1.05)
    ax.set_title("held-out classification metrics")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_run_figures(results: list[FoldResult], out_dir: str) -> list[str]:
    """Write the standard figures for one training run, returning paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "training_curves.png")]
    render_training_curves(results, paths[0])
    if _is_classification(results):
        paths.append(os.path.join(out_dir, "test_metrics.png"))
        render_test_metrics(results, paths[1])
    else:
        paths.append(os.path.join(out_dir, "test_scatter.png"))
        render_test_scatter(results, paths[1])
    return paths


def render_ablation_figure(rows: list[AblationRow], path: str) -> None:
    """Mean test RMSE per variant with a one-sigma error bar across seeds."""
    x = np.arange(len(rows), dtype=np.float64)
    means = [row.mean_rmse for row in rows]
    stds = [row.std_rmse for row in rows]
    fig, ax = plt.subplots(figsize=(1.4 * len(rows) + 3.0, 3.8))
    ax.bar(x, means, 0.6, yerr=stds, capsize=4, color="C0")
    for i, row in enumerate(rows):
        if row.improvement_pct is not None:
            ax.annotate(f"{row.improvement_pct:+.1f}%", (x[i], means[i]),
                        textcoords="offset points", xytext=(0, 6),
                        ha="center", fontsize=8)
    ax.set_xticks(x)
    ax.set_xticklabels([row.variant for row in rows], fontsize=8)
    ax.set_ylabel("mean test RMSE")
    ax.set_title("variant ladder")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
