"""Report figures rendered alongside the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_DPI = 120


def error_bars(summaries, path: str | Path) -> None:
    """Signed per-food volume and mass error bars (percent)."""
    foods = [s.food for s in summaries]
    vol = [100.0 * s.mean_volume_error for s in summaries]
    mass = [100.0 * s.mean_mass_error for s in summaries]
    pos = np.arange(len(foods))

    fig, axes = plt.subplots(1, 2, figsize=(11, max(3.0, 0.35 * len(foods) + 1.5)), sharey=True)
    for ax, values, title in ((axes[0], vol, "volume error"), (axes[1], mass, "mass error")):
        colors = ["#b24040" if v < 0 else "#4a7a4a" for v in values]
        ax.barh(pos, values, color=colors)
        ax.axvline(0.0, color="k", linewidth=0.8)
        ax.set_title(title)
        ax.set_xlabel("mean signed error (%)")
    axes[0].set_yticks(pos)
    axes[0].set_yticklabels(foods)
    axes[0].invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def estimate_scatter(records, path: str | Path) -> None:
    """Estimated vs. reference volume and mass with the identity line."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    panels = (
        (axes[0], [(r.ref_volume, r.est_volume) for r in records], "volume (cm³)"),
        (axes[1], [(r.ref_mass, r.est_mass) for r in records
                   if r.ref_mass is not None and r.est_mass is not None], "mass (g)"),
    )
    for ax, points, label in panels:
        if points:
            ref, est = zip(*points)
            ax.scatter(ref, est, s=18, alpha=0.7, edgecolors="none")
            top = max(max(ref), max(est)) * 1.05
            ax.plot([0, top], [0, top], "k--", linewidth=0.8)
            ax.set_xlim(0, top)
            ax.set_ylim(0, top)
        ax.set_xlabel(f"reference {label}")
        ax.set_ylabel(f"estimated {label}")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def pr_curve(recall, precision, ap: float, label: str, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.plot(np.concatenate(([0.0], recall)), np.concatenate(([1.0], precision)),
            drawstyle="steps-post")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_title(f"{label}: AP = {ap:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
