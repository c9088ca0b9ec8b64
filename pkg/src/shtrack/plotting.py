"""Matplotlib figures for tracking runs; everything renders straight to files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .mesh import TriangleMesh  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def _draw_estimate(ax, mesh: TriangleMesh, points=None, limits=None):
    v = mesh.vertices
    ax.plot_trisurf(v[:, 0], v[:, 1], v[:, 2], triangles=mesh.triangles, color="tab:orange",
                    alpha=0.55, linewidth=0.1, edgecolor="0.3")
    if points is not None and len(points):
        ax.scatter(points[:, 0], points[:, 1], points[:, 2], s=2, c="k", depthshade=False)
    if limits is not None:
        lo, hi = limits
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        ax.set_zlim(lo[2], hi[2])
        ax.set_box_aspect(hi - lo)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")


def plot_snapshots(panels, path, suptitle: str | None = None) -> Path:
    """One 3D panel per ``(mesh, points, title)`` tuple, sharing axis limits."""
    verts = [p[0].vertices for p in panels] + [p[1] for p in panels if p[1] is not None and len(p[1])]
    allv = np.vstack(verts)
    lo, hi = allv.min(axis=0), allv.max(axis=0)
    pad = 0.05 * (hi - lo).max()
    limits = (lo - pad, hi + pad)
    with plt.rc_context(RC):
        fig = plt.figure(figsize=(2.6 * len(panels), 2.8))
        for i, (mesh, points, title) in enumerate(panels):
            ax = fig.add_subplot(1, len(panels), i + 1, projection="3d")
            _draw_estimate(ax, mesh, points, limits)
            ax.set_title(title)
        if suptitle:
            fig.suptitle(suptitle)
        return _save(fig, path)


def plot_iou_curve(series: dict, path, ylabel: str = "IoU") -> Path:
    """IoU against time step for one or more labelled runs: ``{label: (k, iou)}``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 2.8))
        for label, (k, values) in series.items():
            ax.plot(k, values, marker="o", ms=3, label=label)
        ax.set_xlabel("time step k")
        ax.set_ylabel(ylabel)
        ax.set_ylim(0, 1)
        ax.grid(alpha=0.3)
        if len(series) > 1:
            ax.legend()
        return _save(fig, path)


def plot_order_sweep(orders, iou_by_order, path) -> Path:
    """Converged IoU per series degree: every seed as a dot, the median as a line."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 2.8))
        medians = []
        for L, values in zip(orders, iou_by_order):
            values = np.asarray(values, dtype=float)
            ax.scatter(np.full(values.size, L), values, s=8, c="0.5")
            medians.append(np.median(values))
        ax.plot(orders, medians, "o-", c="tab:blue", label="median")
        ax.set_xlabel("degree L")
        ax.set_ylabel("converged IoU")
        ax.set_ylim(0, 1)
        ax.set_xticks(list(orders))
        ax.grid(alpha=0.3)
        ax.legend()
        return _save(fig, path)
