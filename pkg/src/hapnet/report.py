"""Reporting: tables and figures rendered from stored run records.

Plotting is a pure post-processing step over the delimited outputs; nothing
in the simulation depends on it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

METHOD_ORDER = ("proposed", "B1", "B2", "B3", "B4")
METHOD_COLORS = {
    "proposed": "#1f77b4",
    "B1": "#ff7f0e",
    "B2": "#2ca02c",
    "B3": "#d62728",
    "B4": "#7f7f7f",
}


def aggregate(summary: list[dict], axis: str) -> dict[tuple[str, float], float]:
    """Mean of per-seed mean PC per (method, axis value)."""
    buckets: dict[tuple[str, float], list[float]] = {}
    for row in summary:
        if row.get("error"):
            continue
        key = (row["method"], float(row["value"]))
        buckets.setdefault(key, []).append(row["mean_pc"])
    return {key: float(np.nanmean(vals)) for key, vals in buckets.items()}


def plot_sweep(summary: list[dict], axis: str, outdir: str | Path) -> Path:
    """Grouped bar chart of mean power cost per method over the axis values."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    means = aggregate(summary, axis)
    values = sorted({v for (_, v) in means})
    methods = [m for m in METHOD_ORDER if any((m, v) in means for v in values)]

    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(methods), 1)
    xs = np.arange(len(values))
    for i, method in enumerate(methods):
        heights = [means.get((method, v), np.nan) for v in values]
        ax.bar(xs + (i - (len(methods) - 1) / 2) * width, heights, width,
               label=method, color=METHOD_COLORS.get(method))
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{v:g}" for v in values])
    ax.set_xlabel(axis)
    ax.set_ylabel("mean power cost (W)")
    ax.set_title(f"power cost vs {axis}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / f"sweep_{axis}.png"
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def plot_learning_curves(curves: dict[str, list[float]], outdir: str | Path,
                         name: str = "learning_curve") -> Path:
    """Reward (negative power cost) per outer training iteration."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, curve in curves.items():
        ax.plot(curve, label=label)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("mean reward (-W)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / f"{name}.png"
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def write_table(summary: list[dict], path: str | Path) -> Path:
    """Aggregate per-(method, value) means into a small CSV table."""
    path = Path(path)
    buckets: dict[tuple[str, float], dict[str, list[float]]] = {}
    for row in summary:
        key = (row["method"], float(row["value"]))
        b = buckets.setdefault(key, {"mean_pc": [], "feasibility_rate": []})
        b["mean_pc"].append(row["mean_pc"])
        b["feasibility_rate"].append(row["feasibility_rate"])
    lines = ["method,value,mean_pc,feasibility_rate,n_seeds"]
    for (method, value), b in sorted(buckets.items()):
        lines.append(
            f"{method},{value:g},{np.nanmean(b['mean_pc']):.8g},"
            f"{np.nanmean(b['feasibility_rate']):.4g},{len(b['mean_pc'])}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path
