"""Figure rendering for reports.

All figures are written as self-contained SVG through the Agg-free
vector backend, so no display is needed and a fixed hash salt keeps
the output stable across runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

matplotlib.rcParams["svg.hashsalt"] = "fmca"

# Omitting the creation date keeps reruns byte-identical.
_SVG_METADATA = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def mode_figure(axis, alphas, curves, path):
    """Overlay the mode curves for one component axis."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for alpha, curve in zip(alphas, curves):
        ax.plot(curve.grid.points, curve.values, label=f"alpha = {alpha:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.set_title(f"Mode of variation, axis {axis}")
    ax.legend(loc="best", fontsize="small")
    _save(fig, path)


def mean_figure(grid, manifold_mean, smoothed_mean, path):
    """Manifold mean against the cross-sectional smooth."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(grid.points, manifold_mean.values, label="manifold mean")
    ax.plot(grid.points, smoothed_mean.values, linestyle="--", label="smoothed mean")
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.set_title("Mean curves")
    ax.legend(loc="best", fontsize="small")
    _save(fig, path)


def embedding_figure(fit, path):
    """Scatter of the first one or two embedding coordinates."""
    emb = fit.manifold.embedding
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    x = emb.coordinates[:, 0]
    if emb.d >= 2:
        y = emb.coordinates[:, 1]
        ax.set_ylabel("coordinate 2")
    else:
        y = x * 0.0
        ax.set_yticks([])
    ax.scatter(x, y, s=12)
    ax.set_xlabel("coordinate 1")
    ax.set_title(f"Embedding (d = {fit.selected_d})")
    _save(fig, path)
