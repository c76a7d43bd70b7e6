"""Figure rendering for the report outputs.

Figures are written next to the delimited files they visualize: the
landscape CSV gets a heatmap, the experiment summary gets per-variant
histograms of final training loss, and trajectories get a norm/objective
plot.  Everything renders off-screen.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_HIST_COLORS = {"original": "#888888", "augmented": "#1f77b4", "monitor": "#d62728"}


def render_landscape(grid, path) -> None:
    """Heatmap of the inner-minimized objective over (theta, b)."""
    meta = grid.metadata
    n_theta, n_b = meta["n_theta"], meta["n_b"]
    values = np.array([r[2] for r in grid.rows]).reshape(n_theta, n_b)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    extent = [*meta["b_range"], *meta["theta_range"]]
    im = ax.imshow(
        np.log10(np.maximum(values, 1e-16)),
        origin="lower",
        aspect="auto",
        extent=extent,
        cmap="viridis",
    )
    fig.colorbar(im, ax=ax, label="log10 inner-minimized objective")
    ax.set_xlabel("b")
    ax.set_ylabel("theta")
    ax.set_title(f"{meta['fixture']} landscape (lambda={meta['lambda']:g})")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_histograms(summary, path, cutoff: float | None = None) -> None:
    """Histograms of final training loss per variant, shared bins."""
    losses = {v: summary.final_losses(v) for v in summary.variants}
    all_vals = [x for vals in losses.values() for x in vals]
    hi = max(all_vals) if all_vals else 1.0
    edges = np.linspace(0.0, max(hi, 1e-6) * 1.02, 25)
    fig, axes = plt.subplots(
        len(summary.variants), 1, figsize=(6.0, 2.1 * len(summary.variants)), sharex=True
    )
    if len(summary.variants) == 1:
        axes = [axes]
    for ax, variant in zip(axes, summary.variants):
        ax.hist(
            losses[variant],
            bins=edges,
            color=_HIST_COLORS.get(variant, "#444444"),
            alpha=0.85,
        )
        ax.set_ylabel(variant)
        if cutoff is not None:
            ax.axvline(cutoff, color="black", linestyle=":", linewidth=1)
    axes[-1].set_xlabel("final training loss")
    axes[0].set_title("final loss by variant")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_trajectories(records, path, max_runs: int = 12) -> None:
    """Objective and aux-norm traces for a sample of runs."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    for rec in records[:max_runs]:
        it = [s.iteration for s in rec.samples]
        ax1.plot(it, [s.objective for s in rec.samples], linewidth=0.9,
                 color=_HIST_COLORS.get(rec.variant, "#444444"), alpha=0.7)
        ax2.plot(it, [s.aux_norm for s in rec.samples], linewidth=0.9,
                 color=_HIST_COLORS.get(rec.variant, "#444444"), alpha=0.7)
    ax1.set_ylabel("objective")
    ax1.set_yscale("symlog", linthresh=1e-8)
    ax2.set_ylabel("aux norm")
    ax2.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
