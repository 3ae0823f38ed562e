from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.ndimage import gaussian_filter
from scipy.special import erf

from wave_enclosure.core.errors import domain_error
from wave_enclosure.schemas.forward import SMOOTHING_TRUNCATE, SourceSpec, SpatialGrid
from wave_enclosure.schemas.geometry import Ball
from wave_enclosure.schemas.medium import MediumField
from wave_enclosure.services import geometry, medium as medium_service, stencil

logger = logging.getLogger(__name__)


def axis_centers(grid: SpatialGrid) -> list[NDArray[np.float64]]:
    return [o + (np.arange(n) + 0.5) * grid.h for o, n in zip(grid.origin, grid.shape)]


def cell_centers(grid: SpatialGrid) -> NDArray[np.float64]:
    """All cell centres in C order, shape (nx*ny*nz, 3)."""
    xs, ys, zs = np.meshgrid(*axis_centers(grid), indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])


def _harmonic_faces(g: NDArray[np.float64], axis: int) -> NDArray[np.float64]:
    shape = list(g.shape)
    shape[axis] += 1
    faces = np.empty(shape)
    lo = np.take(g, range(0, g.shape[axis] - 1), axis=axis)
    hi = np.take(g, range(1, g.shape[axis]), axis=axis)
    inner = [slice(None)] * 3
    inner[axis] = slice(1, -1)
    faces[tuple(inner)] = 2.0 * lo * hi / (lo + hi)
    # faces against the ghost layer carry the adjacent cell's value
    first = [slice(None)] * 3
    first[axis] = slice(0, 1)
    faces[tuple(first)] = np.take(g, [0], axis=axis)
    last = [slice(None)] * 3
    last[axis] = slice(-1, None)
    faces[tuple(last)] = np.take(g, [g.shape[axis] - 1], axis=axis)
    return faces


@dataclass(frozen=True)
class FluxOperator:
    """Face coefficients of div(gamma grad .) on one grid, with harmonic averaging across faces."""

    grid: SpatialGrid
    kx: NDArray[np.float64]
    ky: NDArray[np.float64]
    kz: NDArray[np.float64]

    @classmethod
    def from_medium(cls, m: MediumField, grid: SpatialGrid) -> FluxOperator:
        gamma = medium_service.sample_gamma(m, cell_centers(grid)).reshape(*grid.shape, 3)
        return cls(
            grid=grid,
            kx=_harmonic_faces(np.ascontiguousarray(gamma[..., 0]), 0),
            ky=_harmonic_faces(np.ascontiguousarray(gamma[..., 1]), 1),
            kz=_harmonic_faces(np.ascontiguousarray(gamma[..., 2]), 2),
        )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.grid.shape

    def apply(self, u: NDArray[np.float64], out: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
        """L u including the 1/h**2 factor."""
        if out is None:
            out = np.empty_like(u)
        stencil.flux_divergence(u, self.kx, self.ky, self.kz, 1.0 / self.grid.h**2, out)
        return out

    def diagonal(self) -> NDArray[np.float64]:
        """Diagonal of -L."""
        kx, ky, kz = self.kx, self.ky, self.kz
        d = kx[1:] + kx[:-1] + ky[:, 1:] + ky[:, :-1] + kz[:, :, 1:] + kz[:, :, :-1]
        return d / self.grid.h**2


def smoothed_ball(r: ArrayLike, radius: float, width: float) -> NDArray[np.float64]:
    """Indicator of a ball convolved with an isotropic Gaussian, as a function of the distance r to its centre."""
    r = np.asarray(r, dtype=np.float64)
    s = math.sqrt(2.0) * width
    lead = 0.5 * (erf((radius + r) / s) + erf((radius - r) / s))
    # (exp(-(r - radius)^2 / 2w^2) - exp(-(r + radius)^2 / 2w^2)) / r, finite at r = 0
    k = 2.0 * radius / width**2
    safe = np.where(r > 0, r, 1.0)
    ratio = np.where(r > 0, -np.expm1(-k * safe) / safe, k)
    shell = np.exp(-((r - radius) ** 2) / (2.0 * width**2))
    return lead - width / math.sqrt(2.0 * math.pi) * shell * ratio


def source_field(source: SourceSpec, grid: SpatialGrid) -> NDArray[np.float64]:
    """f on cell centres: cell-centre membership of B, or its Gaussian smoothing.

    Smoothed balls are sampled from the exact convolution; other regions filter the sampled
    indicator. Both are zero beyond support_margin of B.
    """
    centres = cell_centers(grid)
    width = source.smoothing_width
    if width > 0 and isinstance(source.region, Ball):
        r = np.linalg.norm(centres - np.asarray(source.region.center), axis=1)
        reach = source.region.radius + source.support_margin
        profile = np.where(r <= reach, smoothed_ball(r, source.region.radius, width), 0.0)
        return np.ascontiguousarray(source.signed_amplitude * profile.reshape(grid.shape))
    inside = geometry.contains(source.region, centres).reshape(grid.shape)
    f = np.where(inside, source.signed_amplitude, 0.0)
    if width > 0:
        f = gaussian_filter(f, sigma=width / grid.h, mode="constant", truncate=SMOOTHING_TRUNCATE)
    return np.ascontiguousarray(f)


def source_values(source: SourceSpec, nodes: ArrayLike) -> NDArray[np.float64]:
    """Sharp f = sign * c1 * 1_B at the given nodes."""
    inside = geometry.contains(source.region, np.asarray(nodes).reshape(-1, 3))
    return np.where(inside, source.signed_amplitude, 0.0)


class TrilinearSampler:
    """Precomputed trilinear interpolation from cell-centred fields to fixed points."""

    def __init__(self, grid: SpatialGrid, points: ArrayLike) -> None:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        shape = np.asarray(grid.shape)
        s = (pts - np.asarray(grid.origin)) / grid.h - 0.5
        if np.any(s < -1e-9) or np.any(s > shape - 1 + 1e-9):
            raise domain_error("sample points lie outside the grid's cell-centre hull")
        base = np.clip(np.floor(s).astype(np.int64), 0, np.maximum(shape - 2, 0))
        frac = np.clip(s - base, 0.0, 1.0)
        self.grid = grid
        self.count = pts.shape[0]
        self._index = []
        self._weight = []
        for corner in range(8):
            offset = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
            idx = np.minimum(base + offset, shape - 1)
            w = np.prod(np.where(offset == 1, frac, 1.0 - frac), axis=1)
            self._index.append(np.ravel_multi_index(idx.T, grid.shape))
            self._weight.append(w)

    def __call__(self, field: NDArray[np.float64]) -> NDArray[np.float64]:
        flat = field.reshape(-1)
        out = np.zeros(self.count)
        for idx, w in zip(self._index, self._weight):
            out += w * flat[idx]
        return out
