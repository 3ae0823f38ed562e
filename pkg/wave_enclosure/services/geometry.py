"""
Bounded regions: membership, distances, support functions, cones and lattice quadrature.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from itertools import product

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammainc

from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError, domain_error, overlap_error
from wave_enclosure.schemas.geometry import Ball, Box, Cone, Region, RegionUnion

logger = logging.getLogger(__name__)

_DESCENT_TOL = 1e-15
_DESCENT_MAX_ITER = 20000


@dataclass(frozen=True)
class QuadratureSet:
    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise ValueError("quadrature nodes must have shape (N, 3)")
        if self.weights.shape != (self.nodes.shape[0],):
            raise ValueError("one weight per node")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def volume(self) -> float:
        return float(self.weights.sum())


def _as_points(x: ArrayLike) -> tuple[NDArray[np.float64], bool]:
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    return pts.reshape(-1, 3), single


def _contains(region: Region, pts: NDArray[np.float64]) -> NDArray[np.bool_]:
    match region:
        case Ball(center=center, radius=radius):
            return np.sum((pts - np.asarray(center)) ** 2, axis=1) < radius * radius
        case Box(min=lo, max=hi):
            return np.all((pts > np.asarray(lo)) & (pts < np.asarray(hi)), axis=1)
        case RegionUnion(parts=parts):
            mask = np.zeros(pts.shape[0], dtype=bool)
            for part in parts:
                mask |= _contains(part, pts)
            return mask
    raise TypeError(f"unsupported region {type(region).__name__}")


def contains(region: Region, x: ArrayLike) -> bool | NDArray[np.bool_]:
    """Open-set membership; accepts one point or an (N, 3) array."""
    pts, single = _as_points(x)
    mask = _contains(region, pts)
    return bool(mask[0]) if single else mask


def bounding_box(region: Region) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    match region:
        case Ball(center=center, radius=radius):
            c = np.asarray(center, dtype=np.float64)
            return c - radius, c + radius
        case Box(min=lo, max=hi):
            return np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
        case RegionUnion(parts=parts):
            boxes = [bounding_box(p) for p in parts]
            return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)
    raise TypeError(f"unsupported region {type(region).__name__}")


def _dist_points(region: Region, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    match region:
        case Ball(center=center, radius=radius):
            return np.maximum(np.linalg.norm(pts - np.asarray(center), axis=1) - radius, 0.0)
        case Box(min=lo, max=hi):
            gap = np.maximum(np.maximum(np.asarray(lo) - pts, pts - np.asarray(hi)), 0.0)
            return np.linalg.norm(gap, axis=1)
        case RegionUnion(parts=parts):
            return np.min([_dist_points(p, pts) for p in parts], axis=0)
    raise TypeError(f"unsupported region {type(region).__name__}")


def dist_point_region(x: ArrayLike, region: Region) -> float | NDArray[np.float64]:
    """Distance from point(s) to the closure of the region; zero inside."""
    pts, single = _as_points(x)
    d = _dist_points(region, pts)
    return float(d[0]) if single else d


def project(region: Ball | Box, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Nearest point of the closed convex region."""
    if isinstance(region, Ball):
        c = np.asarray(region.center)
        offset = x - c
        norm = float(np.linalg.norm(offset))
        if norm <= region.radius:
            return x.copy()
        return c + offset * (region.radius / norm)
    return np.clip(x, np.asarray(region.min), np.asarray(region.max))


def convex_parts(region: Region) -> list[Ball | Box]:
    if isinstance(region, RegionUnion):
        return [leaf for part in region.parts for leaf in convex_parts(part)]
    return [region]


def _closures_meet(a: Ball | Box, b: Ball | Box) -> bool:
    if isinstance(a, Box) and isinstance(b, Box):
        return all(alo <= bhi and blo <= ahi for alo, ahi, blo, bhi in zip(a.min, a.max, b.min, b.max))
    if isinstance(a, Ball) and isinstance(b, Ball):
        gap = math.dist(a.center, b.center)
        return gap <= a.radius + b.radius
    ball, other = (a, b) if isinstance(a, Ball) else (b, a)
    return dist_point_region(ball.center, other) <= ball.radius


def _box_box_descent(a: Box, b: Box) -> float:
    # alternating projections converge to a nearest pair of disjoint convex sets
    best = math.inf
    starts = [np.asarray(c, dtype=np.float64) for c in product(*zip(a.min, a.max))]
    starts.append(0.5 * (np.asarray(a.min) + np.asarray(a.max)))
    for start in starts:
        pa = start
        pb = project(b, pa)
        for _ in range(_DESCENT_MAX_ITER):
            pa_next = project(a, pb)
            pb_next = project(b, pa_next)
            moved = max(np.max(np.abs(pa_next - pa)), np.max(np.abs(pb_next - pb)))
            pa, pb = pa_next, pb_next
            if moved < _DESCENT_TOL:
                break
        best = min(best, float(np.linalg.norm(pa - pb)))
    return best


def _pair_distance(a: Ball | Box, b: Ball | Box) -> float:
    if isinstance(a, Ball) and isinstance(b, Ball):
        return math.dist(a.center, b.center) - a.radius - b.radius
    if isinstance(a, Ball):
        return float(dist_point_region(a.center, b)) - a.radius
    if isinstance(b, Ball):
        return float(dist_point_region(b.center, a)) - b.radius
    # canonical argument order keeps the result symmetric bit for bit
    if a.model_dump_json() > b.model_dump_json():
        a, b = b, a
    return _box_box_descent(a, b)


def dist_sets(a: Region, b: Region) -> float:
    """inf |x - y| over x in A, y in B; raises OVERLAP when the closures meet."""
    parts_a = convex_parts(a)
    parts_b = convex_parts(b)
    for pa in parts_a:
        for pb in parts_b:
            if _closures_meet(pa, pb):
                raise overlap_error("region closures intersect", a=pa.model_dump(), b=pb.model_dump())
    return min(_pair_distance(pa, pb) for pa in parts_a for pb in parts_b)


def support_function(region: Region, omega: ArrayLike) -> float | NDArray[np.float64]:
    """h(omega) = sup over the region of x . omega, for unit omega (one or an (M, 3) array)."""
    dirs, single = _as_points(omega)
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise domain_error("support directions must be unit vectors")
    values = _support(region, dirs)
    return float(values[0]) if single else values


def _support(region: Region, dirs: NDArray[np.float64]) -> NDArray[np.float64]:
    match region:
        case Ball(center=center, radius=radius):
            return dirs @ np.asarray(center) + radius
        case Box(min=lo, max=hi):
            return np.sum(np.maximum(dirs * np.asarray(lo), dirs * np.asarray(hi)), axis=1)
        case RegionUnion(parts=parts):
            return np.max([_support(p, dirs) for p in parts], axis=0)
    raise TypeError(f"unsupported region {type(region).__name__}")


def hull_predicate(
    directions: ArrayLike, supports: ArrayLike
) -> Callable[[ArrayLike], NDArray[np.bool_]]:
    """Intersection of the half-spaces x . omega < h(omega)."""
    dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    h = np.asarray(supports, dtype=np.float64).reshape(-1)
    if dirs.shape[0] != h.shape[0]:
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.DIMENSION_MISMATCH,
            message=f"{dirs.shape[0]} directions but {h.shape[0]} support values",
        )

    def predicate(x: ArrayLike) -> NDArray[np.bool_]:
        pts, _ = _as_points(x)
        return np.all(pts @ dirs.T < h, axis=1)

    return predicate


def cone_integral(cone: Cone, tau: float) -> float:
    """Integral of exp(-tau |x - a|) over the cone, by polar reduction."""
    if tau < 1:
        raise domain_error(f"cone integral needs tau >= 1, got {tau!r}")
    solid_angle = 2.0 * math.pi * (1.0 - math.cos(cone.opening))
    # lower incomplete gamma(3, a) = int_0^a s^2 e^-s ds = 2 * P(3, a)
    radial = 2.0 * float(gammainc(3.0, cone.height * tau))
    return solid_angle * radial / tau**3


def cone_contains(cone: Cone, x: ArrayLike) -> NDArray[np.bool_]:
    pts, _ = _as_points(x)
    offset = pts - np.asarray(cone.vertex)
    r = np.linalg.norm(offset, axis=1)
    along = offset @ np.asarray(cone.axis)
    return (r <= cone.height) & (along >= r * math.cos(cone.opening))


def _lattice_axis(lo: float, hi: float, anchor: float, spacing: float) -> NDArray[np.float64]:
    k_min = math.ceil((lo - anchor) / spacing - 0.5)
    k_max = math.floor((hi - anchor) / spacing - 0.5)
    return anchor + (np.arange(k_min, k_max + 1, dtype=np.float64) + 0.5) * spacing


def sample_region(
    region: Region, spacing: float, anchor: Sequence[float] = (0.0, 0.0, 0.0)
) -> QuadratureSet:
    """Midpoint rule: lattice nodes anchor + (k + 1/2) * spacing that fall inside the region."""
    if spacing <= 0:
        raise domain_error(f"spacing must be positive, got {spacing!r}")
    lo, hi = bounding_box(region)
    axes = [_lattice_axis(lo[d], hi[d], anchor[d], spacing) for d in range(3)]
    ys, zs = np.meshgrid(axes[1], axes[2], indexing="ij")
    plane = np.column_stack([ys.ravel(), zs.ravel()])

    chunks: list[NDArray[np.float64]] = []
    for x in axes[0]:
        slab = np.column_stack([np.full(plane.shape[0], x), plane])
        chunks.append(slab[_contains(region, slab)])
    nodes = np.concatenate(chunks) if chunks else np.empty((0, 3))
    if nodes.shape[0] == 0:
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.EMPTY_REGION,
            message=f"no lattice node of spacing {spacing!r} falls inside the region",
        )
    logger.debug("Sampled %d nodes at spacing %g", nodes.shape[0], spacing)
    return QuadratureSet(nodes=nodes, weights=np.full(nodes.shape[0], spacing**3))


def ball_quadrature(ball: Ball, order: int = 24) -> QuadratureSet:
    """Product rule in spherical coordinates: Gauss-Legendre in r and cos(theta), trapezoid in phi.

    Converges geometrically for integrands smooth on the closed ball, where the midpoint
    lattice of ``sample_region`` is limited by how it cuts the sphere.
    """
    if order < 2:
        raise domain_error(f"quadrature order must be at least 2, got {order!r}")
    t, wt = np.polynomial.legendre.leggauss(order)
    r = 0.5 * ball.radius * (t + 1.0)
    wr = 0.5 * ball.radius * wt * r**2
    mu, wmu = np.polynomial.legendre.leggauss(order)
    phi = 2.0 * math.pi * np.arange(2 * order) / (2 * order)
    wphi = math.pi / order

    rr, mm, pp = np.meshgrid(r, mu, phi, indexing="ij")
    sin_theta = np.sqrt(1.0 - mm**2)
    offsets = np.column_stack(
        [(rr * sin_theta * np.cos(pp)).ravel(), (rr * sin_theta * np.sin(pp)).ravel(), (rr * mm).ravel()]
    )
    weights = (wr[:, None, None] * wmu[None, :, None] * np.full(phi.size, wphi)[None, None, :]).ravel()
    return QuadratureSet(nodes=np.asarray(ball.center, dtype=np.float64) + offsets, weights=weights)


def cube_directions() -> NDArray[np.float64]:
    """The 26 face, edge and corner directions of a cube, normalized."""
    dirs = np.array([d for d in product((-1.0, 0.0, 1.0), repeat=3) if any(d)])
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def fibonacci_directions(count: int) -> NDArray[np.float64]:
    """Near-uniform unit vectors on the sphere (golden-angle spiral)."""
    k = np.arange(count, dtype=np.float64) + 0.5
    z = 1.0 - 2.0 * k / count
    radius = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    return np.column_stack([radius * np.cos(phi), radius * np.sin(phi), z])


def surface_samples(region: Ball | Box, count: int) -> NDArray[np.float64]:
    """Deterministic points on the boundary of a convex part."""
    if isinstance(region, Ball):
        return np.asarray(region.center) + region.radius * fibonacci_directions(count)
    lo, hi = np.asarray(region.min), np.asarray(region.max)
    per_side = max(2, int(math.ceil(math.sqrt(count / 6.0))))
    t = np.linspace(0.0, 1.0, per_side)
    a, b = np.meshgrid(t, t, indexing="ij")
    a, b = a.ravel(), b.ravel()
    points = []
    for axis in range(3):
        others = [d for d in range(3) if d != axis]
        for side in (lo[axis], hi[axis]):
            face = np.empty((a.size, 3))
            face[:, axis] = side
            face[:, others[0]] = lo[others[0]] + a * (hi[others[0]] - lo[others[0]])
            face[:, others[1]] = lo[others[1]] + b * (hi[others[1]] - lo[others[1]])
            points.append(face)
    return np.concatenate(points)
