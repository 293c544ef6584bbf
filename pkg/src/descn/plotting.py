"""Report figures written next to the CSV outputs of an experiment."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import METRIC_NAMES, AggregateReport, uplift_curve  # noqa: E402

METRIC_LABELS = {
    "sqrt_pehe": r"$\sqrt{\epsilon_{PEHE}}$",
    "ate_error": r"$\epsilon_{ATE}$",
    "att_error": r"$\epsilon_{ATT}$",
    "auuc": "AUUC",
}

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no Software/date metadata, so reruns give identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_metric_bars(report: AggregateReport, path) -> Path:
    """One panel per metric: mean per model with s.e. error bars."""
    metrics = [m for m in METRIC_NAMES if any(m in row for row in report.rows.values())]
    models = report.models()
    with plt.rc_context(_RC):
        ncol = max(len(metrics), 1)
        fig, axes = plt.subplots(1, ncol, figsize=(2.6 * ncol, 2.8), squeeze=False)
        for ax, metric in zip(axes[0], metrics):
            means = [report.rows[m][metric].mean if metric in report.rows[m] else np.nan for m in models]
            errs = [(report.rows[m][metric].se or 0.0) if metric in report.rows[m] else 0.0 for m in models]
            colors = ["0.55" if m == report.baseline else "C0" for m in models]
            ax.bar(range(len(models)), means, yerr=errs, color=colors, capsize=3)
            ax.set_xticks(range(len(models)))
            ax.set_xticklabels(models, rotation=35, ha="right")
            ax.set_title(METRIC_LABELS.get(metric, metric))
        fig.tight_layout()
        return _save(fig, path)


def plot_training_curves(histories: dict[str, list[list[dict]]], path, key: str = "total") -> Path:
    """Per-epoch training loss, one line per (model, repetition)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for i, (model, runs) in enumerate(histories.items()):
            for r, hist in enumerate(runs):
                if not hist:
                    continue
                ax.plot([h["epoch"] + 1 for h in hist], [h[key] for h in hist], color=f"C{i}",
                        alpha=0.9 if r == 0 else 0.35, lw=1.2, label=model if r == 0 else None)
        ax.set_xlabel("epoch")
        ax.set_ylabel(f"training loss ({key})")
        if ax.lines:
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_uplift_curves(scores: dict[str, np.ndarray], y, w, path) -> Path:
    """Uplift curves of several rankings of one test set."""
    y = np.asarray(y)
    n = y.size
    frac = np.arange(1, n + 1) / n
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for i, (name, score) in enumerate(scores.items()):
            ax.plot(frac, uplift_curve(score, y, w), lw=1.2, color=f"C{i}", label=name)
        gap = float(y[np.asarray(w) == 1].mean() - y[np.asarray(w) == 0].mean())
        ax.plot([0, 1], [0, gap], color="0.4", ls="--", lw=1.0, label="random")
        ax.set_xlabel("fraction targeted")
        ax.set_ylabel("uplift")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def grid_shape(k: int) -> tuple[int, int]:
    cols = math.ceil(math.sqrt(k))
    return math.ceil(k / cols), cols
