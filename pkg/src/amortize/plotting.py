"""Static figures: fibre path overlays and arm poses, written as SVG."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import chamfer_per_point  # noqa: E402

# identical inputs give identical files
matplotlib.rcParams["svg.hashsalt"] = "amortize"
_META = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", bbox_inches="tight", metadata=_META)
    plt.close(fig)


def plot_path_overlay(path, goal, design=None, realization=None, shade: bool = False, title: str | None = None):
    """Goal, nozzle path and realized fibre in distinct strokes.

    With ``shade`` the realized points are coloured by their nearest
    distance to the goal.
    """
    fig, ax = plt.subplots(figsize=(5, 5))
    g = np.asarray(goal)
    ax.plot(g[:, 0], g[:, 1], "-", color="0.2", lw=1.6, label="goal")
    if design is not None:
        d = np.asarray(design)
        ax.plot(d[:, 0], d[:, 1], "--", color="tab:blue", lw=1.0, label="design")
    if realization is not None:
        u = np.asarray(realization)
        ax.plot(u[:, 0], u[:, 1], "-", color="tab:orange", lw=1.0, label="realization")
        if shade:
            _, du = chamfer_per_point(g, u)
            sc = ax.scatter(u[:, 0], u[:, 1], c=du, s=6, cmap="viridis", zorder=3)
            fig.colorbar(sc, ax=ax, shrink=0.7, label="nearest distance")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_robot_pose(path, vertices, target=None, obstacle_center=None, radius: float = 0.9, title: str | None = None):
    """Mesh edges of the arm, with the obstacle circle and a target cross."""
    v = np.asarray(vertices)
    lv = v.reshape(-1, 3, 2)
    fig, ax = plt.subplots(figsize=(5, 6))
    for k in range(3):
        ax.plot(lv[:, k, 0], lv[:, k, 1], "-", color="tab:blue", lw=1.0, gid=f"arm-column-{k}")
    for row in lv:
        ax.plot(row[:, 0], row[:, 1], "-", color="tab:blue", lw=0.6)
    if obstacle_center is not None:
        ax.add_patch(plt.Circle(tuple(obstacle_center), radius, fill=False, color="tab:red", lw=1.2))
    if target is not None:
        ax.plot([target[0]], [target[1]], "x", color="k", ms=9, mew=2)
    ax.set_aspect("equal")
    ax.autoscale_view()
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_metric_hist(path, values_by_method: dict, xlabel: str):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, vals in values_by_method.items():
        vals = np.asarray([v for v in vals if np.isfinite(v)])
        if len(vals):
            ax.hist(vals, bins=20, alpha=0.5, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("goals")
    ax.legend(fontsize=8)
    _save(fig, path)
