"""
SVG figures for slope fits, traces and enclosure slices.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from numpy.typing import NDArray  # noqa: E402

from wave_enclosure.schemas.geometry import Ball, Box, Region, RegionUnion  # noqa: E402
from wave_enclosure.schemas.results import IndicatorSeries, SlopeFit  # noqa: E402
from wave_enclosure.services.indicator import Enclosure  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamp keep SVG output identical across runs
plt.rcParams["svg.hashsalt"] = "wave-enclosure"


def _save(fig, out: str | Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("Wrote %s", out)
    return out


def plot_slope(series: IndicatorSeries, fit: SlopeFit | None, out: str | Path) -> Path:
    taus = np.asarray(series.taus)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(np.asarray(series.values)))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(taus, logs, "o", label=f"log|I| ({series.variant})")
    if fit is not None:
        grid = np.linspace(fit.window[0], fit.window[1], 200)
        model = -fit.scale * fit.L_hat * grid + fit.p_hat * np.log(grid) + fit.c_hat
        ax.plot(grid, model, "-", label=f"fit: L = {fit.L_hat:.6g}, p = {fit.p_hat:.3g}")
        ax.axvspan(fit.window[0], fit.window[1], alpha=0.1)
    ax.set_xlabel("tau")
    ax.set_ylabel("log |I_tau|")
    ax.legend()
    return _save(fig, out)


def plot_traces(times: NDArray[np.float64], values: NDArray[np.float64], out: str | Path, max_nodes: int = 8) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    columns = np.linspace(0, values.shape[1] - 1, min(max_nodes, values.shape[1])).round().astype(int)
    for q in np.unique(columns):
        ax.plot(times, values[:, q], lw=1.0, label=f"node {q}")
    ax.set_xlabel("t")
    ax.set_ylabel("u(t, x_q)")
    ax.legend(fontsize="small")
    return _save(fig, out)


def _outline(ax, region: Region, x3: float) -> None:
    match region:
        case Ball(center=c, radius=r):
            depth = x3 - c[2]
            if abs(depth) < r:
                ax.add_patch(plt.Circle((c[0], c[1]), float(np.sqrt(r * r - depth * depth)), fill=False, color="k"))
        case Box(min=lo, max=hi):
            if lo[2] < x3 < hi[2]:
                ax.add_patch(plt.Rectangle((lo[0], lo[1]), hi[0] - lo[0], hi[1] - lo[1], fill=False, color="k"))
        case RegionUnion(parts=parts):
            for part in parts:
                _outline(ax, part, x3)


def plot_enclosure_slice(
    encl: Enclosure,
    x3: float,
    extent: tuple[float, float, float, float],
    out: str | Path,
    region: Region | None = None,
    resolution: int = 200,
) -> Path:
    """Raster of the enclosure predicate on the plane at height x3, with the inclusion outline if known."""
    xs = np.linspace(extent[0], extent[1], resolution)
    ys = np.linspace(extent[2], extent[3], resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    points = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, x3)])
    inside = encl.contains(points).reshape(gx.shape)

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(inside.astype(float), origin="lower", extent=extent, cmap="Greys", alpha=0.4, interpolation="nearest")
    if region is not None:
        _outline(ax, region, x3)
    near = np.abs(encl.centers[:, 2] - x3) < 1e-9
    if near.any():
        ax.plot(encl.centers[near, 0], encl.centers[near, 1], "r+")
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(f"enclosure at x3 = {x3:g}")
    return _save(fig, out)
