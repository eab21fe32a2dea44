"""Figures written next to the CSV/markdown outputs."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHOD_COLORS = {"standard": "tab:gray", "npc": "tab:blue", "parc": "tab:red"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trace(trace, path, title=None):
    """Lambda and loss against arclength for one continuation trace."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    s = trace.arclengths
    ax1.plot(s, trace.lambdas, ".-")
    ax1.set_xlabel("arclength s")
    ax1.set_ylabel(r"$\lambda$")
    ax2.semilogy(s, trace.losses, ".-", color="tab:red")
    ax2.set_xlabel("arclength s")
    ax2.set_ylabel("loss")
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_fold(traces, path, known_path=None, lam_range=(0.0, 1.0)):
    """Theta against lambda for testbed traces, with the analytic branches if given.

    ``traces`` maps a legend label to a trace.
    """
    fig, ax = plt.subplots(figsize=(5, 4))
    if known_path is not None:
        lam = np.linspace(*lam_range, 400)
        for branch in (1, -1):
            ax.plot(lam, known_path(lam, branch), color="lightgray", lw=4, zorder=0,
                    label="analytic" if branch == 1 else None)
    markers = iter(["o-", "s--", "^:", "x-"])
    for label, trace in traces.items():
        ax.plot(trace.lambdas, trace.thetas[:, 0], next(markers), ms=3, label=label)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\theta$")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_summary(summary, path, metric="test_loss"):
    """Bar chart of a metric's mean (error bar = std) per configuration, one panel per task."""
    tasks = sorted({e["task"] for e in summary})
    if not tasks:
        return None
    fig, axes = plt.subplots(1, len(tasks), figsize=(5 * len(tasks), 3.8), squeeze=False)
    for ax, task in zip(axes[0], tasks):
        entries = [e for e in summary if e["task"] == task and metric in e]
        labels = [f"{e['method']}\n{e['homotopy']}" for e in entries]
        means = [e[metric] for e in entries]
        errs = [0.0 if math.isnan(e.get(metric + "_std", 0.0)) else e.get(metric + "_std", 0.0)
                for e in entries]
        colors = [METHOD_COLORS.get(e["method"], "k") for e in entries]
        ax.bar(range(len(entries)), means, yerr=errs, color=colors, capsize=3)
        ax.set_xticks(range(len(entries)))
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_title(task)
        ax.set_ylabel(metric.replace("_", " "))
    return _save(fig, path)


def plot_training_curves(curves, path):
    """Loss against cumulative solver steps.

    ``curves`` maps a label to ``(steps, losses)``; labels starting with a
    method name get that method's colour.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (steps, losses) in curves.items():
        color = METHOD_COLORS.get(label.split("/")[0])
        ax.semilogy(steps, losses, label=label, color=color, alpha=0.8)
    ax.set_xlabel("solver steps")
    ax.set_ylabel("train loss")
    ax.legend(fontsize=7, frameon=False)
    return _save(fig, path)
