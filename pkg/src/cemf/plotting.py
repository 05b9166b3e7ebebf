"""Figures for evaluation reports. Always renders off-screen to files."""

from __future__ import annotations

import os
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
from matplotlib import pyplot as plt  # noqa: E402

from .eval import GROUPS, EvalReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _nan(v):
    return float("nan") if v is None else v


def plot_group_metrics(reports: Mapping[str, EvalReport], n: int, path) -> str:
    """Side-by-side bars of Precision@n and Recall@n per activity group,
    one bar per model."""
    labels = list(reports)
    width = 0.8 / max(len(labels), 1)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7.0, 2.8))
        for ax, metric in zip(axes, ("precision", "recall")):
            for k, label in enumerate(labels):
                rep = reports[label]
                vals = [_nan(getattr(rep.groups[g], metric).get(n)) if g in rep.groups else float("nan") for g in GROUPS]
                xs = [g + (k - (len(labels) - 1) / 2) * width for g in range(len(GROUPS))]
                ax.bar(xs, vals, width=width, label=label)
            ax.set_xticks(range(len(GROUPS)))
            ax.set_xticklabels(GROUPS)
            ax.set_ylabel(f"{metric.capitalize()}@{n}")
        axes[0].legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return str(path)


def plot_metric_curves(reports: Mapping[str, EvalReport], path) -> str:
    """Overall Precision@n and Recall@n against n."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7.0, 2.8))
        for label, rep in reports.items():
            ns = list(rep.n_values)
            axes[0].plot(ns, [_nan(rep.precision[n]) for n in ns], marker="o", ms=3, label=label)
            axes[1].plot(ns, [_nan(rep.recall[n]) for n in ns], marker="o", ms=3, label=label)
        for ax, name in zip(axes, ("Precision@n", "Recall@n")):
            ax.set_xscale("log")
            ax.set_xlabel("n")
            ax.set_ylabel(name)
        axes[0].legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return str(path)


def render_report_figures(reports: Mapping[str, EvalReport], out_dir, stem: str = "report", n: int = 10) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    any_report = next(iter(reports.values()))
    if n not in any_report.n_values:
        n = any_report.n_values[0]
    return [
        plot_metric_curves(reports, os.path.join(out_dir, f"{stem}_curves.png")),
        plot_group_metrics(reports, n, os.path.join(out_dir, f"{stem}_groups_at{n}.png")),
    ]
