"""Figure rendering for certification states and training histories.

All entry points write straight to a file path.  SVG output drops the
creation date from its metadata so reruns produce identical bytes.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# stable ids inside SVG output, so identical runs write identical bytes
matplotlib.rcParams["svg.hashsalt"] = "lipcert"
import matplotlib.pyplot as plt
from matplotlib.patches import Circle

import numpy as np

from .errors import DimensionMismatch
from .geometry import BoxDomain, grid_points
from .lipvor import CertificationState
from .mlp import Network, partials_batch


def _save(fig, path) -> None:
    path = Path(path)
    kwargs = {"metadata": {"Date": None}} if path.suffix == ".svg" else {}
    fig.savefig(path, bbox_inches="tight", **kwargs)
    plt.close(fig)


def _ordered_polygon(vertices: np.ndarray, center: np.ndarray) -> np.ndarray:
    angles = np.arctan2(vertices[:, 1] - center[1], vertices[:, 0] - center[0])
    order = np.argsort(angles)
    ring = vertices[order]
    return np.vstack([ring, ring[:1]])


def plot_certification_state(state: CertificationState, domain: BoxDomain, path) -> None:
    """Cells, certified balls, and counter-examples of a planar run."""
    if state.points.shape[1] != 2:
        raise DimensionMismatch("state plots are only available in dimension 2")
    fig, ax = plt.subplots(figsize=(7, 7))
    lo, hi = domain.lower, domain.upper
    ax.plot(
        [lo[0], hi[0], hi[0], lo[0], lo[0]],
        [lo[1], lo[1], hi[1], hi[1], lo[1]],
        color="black",
        linewidth=1.2,
    )
    for cell in state.cells:
        if len(cell.vertices) >= 3:
            ring = _ordered_polygon(cell.vertices, state.points[cell.generator_index])
            ax.plot(ring[:, 0], ring[:, 1], color="0.75", linewidth=0.6, zorder=1)
    flags = np.asarray(state.violation_flags, dtype=bool)
    for point, radius, bad in zip(state.points, state.radii, flags):
        if radius > 0:
            color = "tab:red" if bad else "tab:green"
            ax.add_patch(Circle(point, radius, fill=True, alpha=0.15, color=color, zorder=2))
    ok = ~flags
    if ok.any():
        ax.plot(state.points[ok, 0], state.points[ok, 1], "o", color="tab:green", markersize=3)
    if flags.any():
        ax.plot(state.points[flags, 0], state.points[flags, 1], "x", color="tab:red", markersize=5)
    pad = 0.02 * max(domain.sides)
    ax.set_xlim(lo[0] - pad, hi[0] + pad)
    ax.set_ylim(lo[1] - pad, hi[1] + pad)
    ax.set_aspect("equal")
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    ax.set_title(f"{len(state.points)} points, {int(flags.sum())} violations")
    _save(fig, path)


def plot_partial_derivative_map(net: Network, domain: BoxDomain, feature: int, path, per_dim: int = 101) -> None:
    """Heat map of one partial derivative over a planar box, zero level drawn."""
    if domain.dim != 2:
        raise DimensionMismatch("derivative maps are only available in dimension 2")
    pts = grid_points(domain, per_dim)
    vals = partials_batch(net, pts, feature).reshape(per_dim, per_dim)
    fig, ax = plt.subplots(figsize=(7, 5.6))
    extent = (domain.lower[0], domain.upper[0], domain.lower[1], domain.upper[1])
    image = ax.imshow(vals.T, origin="lower", extent=extent, aspect="auto", cmap="RdYlGn")
    if vals.min() < 0.0 < vals.max():
        xs = np.linspace(domain.lower[0], domain.upper[0], per_dim)
        ys = np.linspace(domain.lower[1], domain.upper[1], per_dim)
        ax.contour(xs, ys, vals.T, levels=[0.0], colors="black", linewidths=1.0)
    fig.colorbar(image, ax=ax, label=f"d output / d x{feature}")
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    _save(fig, path)


def plot_training_history(history: dict[str, list[float]], path) -> None:
    """Loss curves on a log scale where positive."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    epochs = np.arange(1, len(history["train_total"]) + 1)
    keys = ("train_base", "train_penalty", "train_total", "val_total")
    for key, style in zip(keys, ("-", ":", "-", "--")):
        ax.plot(epochs, np.asarray(history[key]), style, label=key)
    if all(min(history[k]) > 0.0 for k in keys):
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_points_csv(points: np.ndarray, radii: np.ndarray, flags: np.ndarray, domain: BoxDomain, path) -> None:
    """State plot from raw arrays, for rendering previously dumped CSVs."""
    if points.shape[1] != 2:
        raise DimensionMismatch("state plots are only available in dimension 2")
    fig, ax = plt.subplots(figsize=(7, 7))
    lo, hi = domain.lower, domain.upper
    ax.plot(
        [lo[0], hi[0], hi[0], lo[0], lo[0]],
        [lo[1], lo[1], hi[1], hi[1], lo[1]],
        color="black",
        linewidth=1.2,
    )
    flags = np.asarray(flags, dtype=bool)
    for point, radius, bad in zip(points, radii, flags):
        if radius > 0:
            color = "tab:red" if bad else "tab:green"
            ax.add_patch(Circle(point, radius, fill=True, alpha=0.15, color=color))
    ax.plot(points[~flags, 0], points[~flags, 1], "o", color="tab:green", markersize=3)
    if flags.any():
        ax.plot(points[flags, 0], points[flags, 1], "x", color="tab:red", markersize=5)
    ax.set_aspect("equal")
    _save(fig, path)
