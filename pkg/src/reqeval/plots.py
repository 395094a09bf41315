"""Figure rendering for CLI reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import PRPoint


def plot_pr_curves(
    curves: dict[str, tuple[list[PRPoint], float]],
    out_path: str | Path,
) -> Path:
    """One PR plot with a line per judge, AP in the legend."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for label, (points, ap) in sorted(curves.items()):
        recalls = [p.recall for p in points]
        precisions = [p.precision for p in points]
        ax.plot(recalls, precisions, marker="o", label=f"{label} (AP={ap:.3f})")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def plot_requirements_met(
    per_task: dict[str, tuple[float, float]],
    out_path: str | Path,
) -> Path:
    """Grouped bars of independent vs dependent requirements-met per task."""
    fig, ax = plt.subplots(figsize=(max(6.0, 0.8 * len(per_task) + 2), 4.0))
    names = sorted(per_task)
    independent = [per_task[n][0] * 100 for n in names]
    dependent = [per_task[n][1] * 100 for n in names]
    positions = range(len(names))
    width = 0.38
    ax.bar([p - width / 2 for p in positions], independent, width, label="independent")
    ax.bar([p + width / 2 for p in positions], dependent, width, label="dependent")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("Requirements met (%)")
    ax.set_ylim(0, 100)
    ax.legend()
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
