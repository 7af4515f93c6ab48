"""SVG output: t-SNE scatter plots and stick-figure poses."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .kinematics import ChainStructure, joint_positions  # noqa: E402

plt.rcParams["svg.hashsalt"] = "robotembed"
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_META, bbox_inches="tight")
    plt.close(fig)


def scatter_svg(path, xy: np.ndarray, n_joints: Sequence[int], first_feature: Sequence[float],
                title: str = ""):
    """Two panels: coloured by joint count (left) and first node feature (right)."""
    xy = np.asarray(xy)
    n_joints = np.asarray(n_joints)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.2))
    for k in np.unique(n_joints):
        m = n_joints == k
        axes[0].scatter(xy[m, 0], xy[m, 1], s=6, label=f"{k} joints")
    axes[0].legend(markerscale=2, fontsize=8)
    axes[0].set_title("number of joints")
    sc = axes[1].scatter(xy[:, 0], xy[:, 1], s=6, c=first_feature, cmap="viridis")
    fig.colorbar(sc, ax=axes[1])
    axes[1].set_title("first node feature")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title)
    _save(fig, path)


def poses_svg(path, structures: Sequence[ChainStructure], poses: Sequence[Sequence[float]],
              labels: Sequence[str] = ()):
    """Stick figures, one panel per pose."""
    n = len(poses)
    cols = min(n, 4)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.4 * cols, 2.4 * rows), squeeze=False)
    for k, ax in enumerate(axes.ravel()):
        ax.set_axis_off()
        if k >= n:
            continue
        pts = joint_positions(structures[k], poses[k])
        reach = structures[k].reach
        ax.plot(pts[:, 0], pts[:, 1], "-o", lw=2, ms=3)
        ax.plot([0], [0], "ks", ms=5)
        ax.set_xlim(-reach, reach)
        ax.set_ylim(-reach, reach)
        ax.set_aspect("equal")
        if k < len(labels):
            ax.set_title(labels[k], fontsize=8)
    _save(fig, path)
