"""
Travel-time geometry across the flat interface x3 = 0.

The lower half-space has speed sqrt(gamma_minus), the upper one sqrt(gamma_plus).
Interface points are 2-vectors z' = (z1, z2); z~' = (z1, z2, 0).
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize

from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError, domain_error
from wave_enclosure.schemas.geometry import Ball, Box, Region
from wave_enclosure.schemas.optical import CriticalAngle, OpticalPath
from wave_enclosure.services import geometry

logger = logging.getLogger(__name__)

_SNELL_TOL = 1e-14
_SNELL_MAX_ITER = 200


def _check_sides(xs: NDArray[np.float64], ys: NDArray[np.float64]) -> None:
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise domain_error("optical paths need finite endpoints")
    if np.any(xs[:, 2] >= 0) or np.any(ys[:, 2] <= 0):
        raise domain_error("optical paths need x3 < 0 < y3")


def _lift(zp: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.column_stack([zp, np.zeros(zp.shape[0])])


def _snell_parameter(
    xs: NDArray[np.float64], ys: NDArray[np.float64], gamma_plus: float, gamma_minus: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Position t on segment x'y' where sin(th-)/sqrt(g-) = sin(th+)/sqrt(g+); returns (t, residual)."""
    sm, sp = math.sqrt(gamma_minus), math.sqrt(gamma_plus)
    D = np.linalg.norm(ys[:, :2] - xs[:, :2], axis=1)
    a2 = xs[:, 2] ** 2
    b2 = ys[:, 2] ** 2

    def residual(t):
        r_lo = np.sqrt((t * D) ** 2 + a2)
        r_hi = np.sqrt(((1.0 - t) * D) ** 2 + b2)
        return t * D / (sm * r_lo) - (1.0 - t) * D / (sp * r_hi), r_lo, r_hi

    lo = np.zeros_like(D)
    hi = np.ones_like(D)
    t = np.full_like(D, 0.5)
    active = D > 0
    t[~active] = 0.0
    g = np.zeros_like(D)
    for _ in range(_SNELL_MAX_ITER):
        if not active.any():
            break
        g_all, r_lo, r_hi = residual(t)
        g = np.where(active, g_all, g)
        done = active & ((np.abs(g_all) <= _SNELL_TOL) | (hi - lo <= 4 * np.finfo(float).eps))
        active &= ~done
        lo = np.where(active & (g_all < 0), t, lo)
        hi = np.where(active & (g_all > 0), t, hi)
        slope = D * (a2 / (sm * r_lo**3) + b2 / (sp * r_hi**3))
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = t - g_all / slope
        # safeguard: fall back to bisection when Newton leaves the bracket
        bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
        t = np.where(active, np.where(bad, 0.5 * (lo + hi), newton), t)
    g, _, _ = residual(t)
    g[D == 0] = 0.0
    return t, np.abs(g)


def _snell_points(xs, ys, gamma_plus, gamma_minus):
    t, res = _snell_parameter(xs, ys, gamma_plus, gamma_minus)
    zp = xs[:, :2] + t[:, None] * (ys[:, :2] - xs[:, :2])
    return zp, res


def _path_times(xs, ys, zp, gamma_plus, gamma_minus):
    zt = _lift(zp)
    return (
        np.linalg.norm(zt - xs, axis=1) / math.sqrt(gamma_minus)
        + np.linalg.norm(zt - ys, axis=1) / math.sqrt(gamma_plus)
    )


def _pairs(x: ArrayLike, y: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64], bool]:
    xs = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(y, dtype=np.float64))
    xs, ys = np.broadcast_arrays(xs, ys)
    single = np.asarray(x).ndim == 1 and np.asarray(y).ndim == 1
    _check_sides(xs, ys)
    return np.ascontiguousarray(xs), np.ascontiguousarray(ys), single


def snell_point(x: ArrayLike, y: ArrayLike, gamma_plus: float, gamma_minus: float) -> NDArray[np.float64]:
    """Unique minimizer z'(x, y) of the two-segment time; broadcasts over stacked x and y."""
    xs, ys, single = _pairs(x, y)
    zp, _ = _snell_points(xs, ys, gamma_plus, gamma_minus)
    return zp[0] if single else zp


def optical_distance(x: ArrayLike, y: ArrayLike, gamma_plus: float, gamma_minus: float) -> float | NDArray[np.float64]:
    xs, ys, single = _pairs(x, y)
    zp, _ = _snell_points(xs, ys, gamma_plus, gamma_minus)
    times = _path_times(xs, ys, zp, gamma_plus, gamma_minus)
    return float(times[0]) if single else times


def l_path(x: ArrayLike, y: ArrayLike, zp: ArrayLike, gamma_plus: float, gamma_minus: float) -> float | NDArray[np.float64]:
    """l_{x,y}(z') = |z~' - x|/sqrt(g-) + |z~' - y|/sqrt(g+) for one or many interface points."""
    z = np.atleast_2d(np.asarray(zp, dtype=np.float64))
    xs = np.broadcast_to(np.asarray(x, dtype=np.float64), (z.shape[0], 3))
    ys = np.broadcast_to(np.asarray(y, dtype=np.float64), (z.shape[0], 3))
    times = _path_times(xs, ys, z, gamma_plus, gamma_minus)
    return float(times[0]) if np.asarray(zp).ndim == 1 else times


def optical_path(x: ArrayLike, y: ArrayLike, gamma_plus: float, gamma_minus: float) -> OpticalPath:
    xs, ys, _ = _pairs(x, y)
    zp, _ = _snell_points(xs, ys, gamma_plus, gamma_minus)
    z, xv, yv = zp[0], xs[0], ys[0]
    theta_minus = math.atan2(float(np.linalg.norm(z - xv[:2])), abs(xv[2]))
    theta_plus = math.atan2(float(np.linalg.norm(z - yv[:2])), yv[2])
    return OpticalPath(
        x=tuple(xv),
        y=tuple(yv),
        z_prime=(float(z[0]), float(z[1])),
        theta_minus=theta_minus,
        theta_plus=theta_plus,
        l=float(_path_times(xs[:1], ys[:1], zp[:1], gamma_plus, gamma_minus)[0]),
        gamma_plus=gamma_plus,
        gamma_minus=gamma_minus,
    )


def snell_residual(path: OpticalPath) -> float:
    return abs(
        math.sin(path.theta_minus) / math.sqrt(path.gamma_minus)
        - math.sin(path.theta_plus) / math.sqrt(path.gamma_plus)
    )


def stationarity_residual(x: ArrayLike, y: ArrayLike, zp: ArrayLike, gamma_plus: float, gamma_minus: float) -> float:
    """Norm of the interface gradient of l_{x,y} at z'."""
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    z = np.asarray(zp, dtype=np.float64)
    zt = np.append(z, 0.0)
    grad = (z - xv[:2]) / (math.sqrt(gamma_minus) * np.linalg.norm(zt - xv)) + (z - yv[:2]) / (
        math.sqrt(gamma_plus) * np.linalg.norm(zt - yv)
    )
    return float(np.linalg.norm(grad))


def snell_point_brute(
    x: ArrayLike, y: ArrayLike, gamma_plus: float, gamma_minus: float, step: float = 1e-4, refinements: int = 2
) -> NDArray[np.float64]:
    """Scan t in [0, 1] on segment x'y', then rescan around the best sample at 1/100 of the step."""
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    d = yv[:2] - xv[:2]
    lo, hi, h = 0.0, 1.0, step
    best = 0.0
    for _ in range(refinements + 1):
        ts = np.arange(lo, hi + 0.5 * h, h)
        times = l_path(xv, yv, xv[:2] + ts[:, None] * d, gamma_plus, gamma_minus)
        best = float(ts[int(np.argmin(times))])
        lo, hi, h = max(0.0, best - h), min(1.0, best + h), h / 100.0
    return xv[:2] + best * d


def hessian(x: ArrayLike, y: ArrayLike, zp: ArrayLike, gamma_plus: float, gamma_minus: float) -> NDArray[np.float64]:
    """Closed-form 2x2 Hessian of l_{x,y} in z'."""
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    z = np.asarray(zp, dtype=np.float64)
    zt = np.append(z, 0.0)
    out = np.zeros((2, 2))
    for point, speed in ((xv, math.sqrt(gamma_minus)), (yv, math.sqrt(gamma_plus))):
        r = float(np.linalg.norm(zt - point))
        u = (z - point[:2]) / r
        out += (np.eye(2) - np.outer(u, u)) / (speed * r)
    return out


def hessian_det(x: ArrayLike, y: ArrayLike, gamma_plus: float, gamma_minus: float) -> float:
    z = snell_point(x, y, gamma_plus, gamma_minus)
    det = float(np.linalg.det(hessian(x, y, z, gamma_plus, gamma_minus)))
    if not det > 0:
        raise EnclosureError(
            exit_code=ExitCode.NUMERICAL,
            code=ErrorCode.NO_CONVERGENCE,
            message=f"travel-time Hessian at the Snell point is not positive definite (det = {det!r})",
            detail={"det": det, "z_prime": [float(c) for c in z]},
        )
    return det


def critical_angle(gamma_plus: float, gamma_minus: float) -> CriticalAngle:
    if gamma_plus <= gamma_minus:
        raise domain_error("critical angle exists only for gamma_plus > gamma_minus")
    a0 = math.sqrt(gamma_minus / gamma_plus)
    return CriticalAngle(a0=a0, theta0=math.asin(a0))


def tilde_l(x: ArrayLike, y: ArrayLike, zp: ArrayLike, gamma_plus: float, gamma_minus: float) -> float | NDArray[np.float64]:
    """Modified length: the exact time on U1(x), the evanescent surrogate outside it."""
    crit = critical_angle(gamma_plus, gamma_minus)
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_sides(xv[None], yv[None])
    z = np.atleast_2d(np.asarray(zp, dtype=np.float64))
    zt = _lift(z)
    depth = abs(xv[2])
    rho = np.linalg.norm(z - xv[:2], axis=1)
    r_lo = np.linalg.norm(zt - xv, axis=1)
    r_hi = np.linalg.norm(zt - yv, axis=1)
    sm, sp = math.sqrt(gamma_minus), math.sqrt(gamma_plus)

    exact = r_lo / sm + r_hi / sp
    evanescent = depth * math.cos(crit.theta0) / sm + (rho + r_hi) / sp
    inside = rho < crit.a0 * r_lo
    out = np.where(inside, exact, evanescent)
    near = np.abs(np.arctan2(rho, depth) - crit.theta0) < 1e-9
    out = np.where(near, np.minimum(exact, evanescent), out)
    return float(out[0]) if np.asarray(zp).ndim == 1 else out


def critical_point(x: ArrayLike, zp: ArrayLike, gamma_plus: float, gamma_minus: float) -> NDArray[np.float64]:
    """z0' on segment x'z' seen from x under the critical angle."""
    crit = critical_angle(gamma_plus, gamma_minus)
    xv = np.asarray(x, dtype=np.float64)
    z = np.asarray(zp, dtype=np.float64)
    direction = z - xv[:2]
    return xv[:2] + abs(xv[2]) * math.tan(crit.theta0) * direction / np.linalg.norm(direction)


def tilde_l_decomposed(x: ArrayLike, y: ArrayLike, zp: ArrayLike, gamma_plus: float, gamma_minus: float) -> float:
    """|x - z~0'|/sqrt(g-) + (|z0' - z'| + |z~' - y|)/sqrt(g+), valid outside U1(x)."""
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    z = np.asarray(zp, dtype=np.float64)
    z0 = critical_point(xv, z, gamma_plus, gamma_minus)
    first = np.linalg.norm(np.append(z0, 0.0) - xv) / math.sqrt(gamma_minus)
    second = (np.linalg.norm(z0 - z) + np.linalg.norm(np.append(z, 0.0) - yv)) / math.sqrt(gamma_plus)
    return float(first + second)


def min_tilde_l(
    x: ArrayLike, y: ArrayLike, gamma_plus: float, gamma_minus: float, grid: int = 201, tol: float = 1e-10
) -> tuple[float, NDArray[np.float64]]:
    """Brute-force infimum of tilde_l over the interface with zooming refinement."""
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    pad = 2.0 * max(abs(xv[2]), yv[2])
    lo = np.minimum(xv[:2], yv[:2]) - pad
    hi = np.maximum(xv[:2], yv[:2]) + pad
    n = grid
    while True:
        a, b = np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n)
        za, zb = np.meshgrid(a, b, indexing="ij")
        points = np.column_stack([za.ravel(), zb.ravel()])
        values = tilde_l(xv, yv, points, gamma_plus, gamma_minus)
        k = int(np.argmin(values))
        best, value = points[k], float(values[k])
        cell = float(max(a[1] - a[0], b[1] - b[0]))
        if cell < tol:
            return value, best
        lo, hi, n = best - 2.0 * cell, best + 2.0 * cell, 41


def _part_constraints(part: Ball | Box, offset: int):
    if isinstance(part, Ball):
        c = np.asarray(part.center)
        fun = lambda v: part.radius**2 - np.sum((v[offset : offset + 3] - c) ** 2)  # noqa: E731
        return [{"type": "ineq", "fun": fun}], [(None, None)] * 3
    return [], list(zip(part.min, part.max))


def _pair_minimum(d_part: Ball | Box, b_part: Ball | Box, gamma_plus: float, gamma_minus: float, starts: int = 3):
    sm, sp = math.sqrt(gamma_minus), math.sqrt(gamma_plus)
    xs = geometry.surface_samples(d_part, 200)
    ys = geometry.surface_samples(b_part, 200)
    xs, ys = xs[xs[:, 2] < 0], ys[ys[:, 2] > 0]
    xx = np.repeat(xs, ys.shape[0], axis=0)
    yy = np.tile(ys, (xs.shape[0], 1))
    coarse = optical_distance(xx, yy, gamma_plus, gamma_minus)
    order = np.argsort(coarse, kind="stable")[:starts]

    def objective(v):
        xv, yv = v[:3].copy(), v[3:].copy()
        # SLSQP may probe slightly infeasible points; keep them on their side of the interface
        xv[2] = min(xv[2], -1e-12)
        yv[2] = max(yv[2], 1e-12)
        z = snell_point(xv, yv, gamma_plus, gamma_minus)
        zt = np.append(z, 0.0)
        r_lo = np.linalg.norm(xv - zt)
        r_hi = np.linalg.norm(yv - zt)
        grad = np.concatenate([(xv - zt) / (sm * r_lo), (yv - zt) / (sp * r_hi)])
        return r_lo / sm + r_hi / sp, grad

    cons_d, bounds_d = _part_constraints(d_part, 0)
    cons_b, bounds_b = _part_constraints(b_part, 3)
    best = (math.inf, None, None)
    for k in order:
        v0 = np.concatenate([xx[k], yy[k]])
        result = minimize(
            objective,
            v0,
            jac=True,
            method="SLSQP",
            bounds=bounds_d + bounds_b,
            constraints=cons_d + cons_b,
            options={"ftol": 1e-15, "maxiter": 500},
        )
        xv = geometry.project(d_part, result.x[:3])
        yv = geometry.project(b_part, result.x[3:])
        if xv[2] >= 0 or yv[2] <= 0:
            continue
        value = float(optical_distance(xv, yv, gamma_plus, gamma_minus))
        if value < best[0]:
            best = (value, xv, yv)
    return best


def min_optical_distance(
    d_region: Region, b_region: Region, gamma_plus: float, gamma_minus: float
) -> tuple[float, NDArray[np.float64], NDArray[np.float64]]:
    """l(D, B) = inf over x in D, y in B of l(x, y), with a minimizing pair."""
    _, d_hi = geometry.bounding_box(d_region)
    b_lo, _ = geometry.bounding_box(b_region)
    if not (d_hi[2] < 0 < b_lo[2]):
        raise domain_error("l(D, B) needs D strictly below and B strictly above the interface")
    best = (math.inf, None, None)
    for d_part in geometry.convex_parts(d_region):
        for b_part in geometry.convex_parts(b_region):
            candidate = _pair_minimum(d_part, b_part, gamma_plus, gamma_minus)
            if candidate[0] < best[0]:
                best = candidate
    logger.debug("l(D, B) = %.12g", best[0])
    return best
