"""Matplotlib figure writers for the CLI report paths.

Every report command drops a PNG next to its CSV/JSON outputs unless figures
are disabled.  The Agg backend keeps rendering headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .measure import DiscreteMeasure
from .metric import PointCloud

__all__ = [
    "save_cloud_plot",
    "save_measure_plot",
    "save_decay_plot",
    "save_stability_plot",
]

_DOT = dict(s=2.0, linewidths=0.0, color="black")


def save_cloud_plot(cloud: PointCloud, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    pts = cloud.points
    if cloud.dim == 1:
        ax.scatter(pts[:, 0], np.zeros(len(cloud)), **_DOT)
        ax.set_yticks([])
    else:
        ax.scatter(pts[:, 0], pts[:, 1], **_DOT)
        ax.set_ylabel("x1")
    ax.set_xlabel("x0")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_measure_plot(measure: DiscreteMeasure, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    if measure.dim == 1:
        ax.vlines(measure.atoms[:, 0], 0.0, measure.weights, color="black", lw=0.8)
        ax.set_ylabel("weight")
    else:
        sc = ax.scatter(measure.atoms[:, 0], measure.atoms[:, 1],
                        c=measure.weights, s=6.0, cmap="viridis", linewidths=0.0)
        fig.colorbar(sc, ax=ax, label="weight")
        ax.set_ylabel("x1")
    ax.set_xlabel("x0")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_decay_plot(deltas, path, ylabel: str, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(np.arange(1, len(deltas) + 1), deltas, marker="o", ms=3,
                color="black", lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_stability_plot(rows, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    idx = [row["index"] for row in rows]
    ax.semilogy(idx, [row["eps"] for row in rows], marker="s", ms=4,
                lw=1.0, label="weight-family gap")
    ax.semilogy(idx, [row["measured"] for row in rows], marker="o", ms=4,
                lw=1.0, label="measured W1")
    ax.semilogy(idx, [row["bound"] for row in rows], marker="^", ms=4,
                lw=1.0, ls="--", label="bound")
    ax.set_xlabel("model index")
    ax.legend()
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
