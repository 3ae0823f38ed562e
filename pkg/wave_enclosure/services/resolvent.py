"""
Background resolvent v(x; tau): the solution of (tau^2 - L) v = f.

Free space uses the Yukawa kernel exp(-tau r)/(4 pi r) by quadrature over B.
Layered and general media use a conjugate-gradient solve of the 7-point
flux-form operator on a padded grid.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.linalg import LinearOperator, cg

from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError, domain_error
from wave_enclosure.schemas.forward import HelmholtzSolveSpec, SourceSpec, SpatialGrid
from wave_enclosure.schemas.geometry import Ball, Region
from wave_enclosure.schemas.medium import MediumField, TwoLayer
from wave_enclosure.services import geometry, optical, stencil
from wave_enclosure.services.geometry import QuadratureSet
from wave_enclosure.services.grid import FluxOperator, TrilinearSampler, source_field, source_values

logger = logging.getLogger(__name__)

# restarts from the current iterate when the recursive residual drifted from the true one
_CG_RESTARTS = 3


@dataclass(frozen=True)
class ResolventField:
    """Values and gradients of v(.; tau) at a batch of points, row k belonging to points[k]."""

    points: NDArray[np.float64]
    tau: float
    values: NDArray[np.float64]
    gradients: NDArray[np.float64]
    residual: float | None = None
    iterations: int | None = None

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float


@dataclass(frozen=True)
class AsymptoticKernel:
    value: float
    log_value: float
    gradient: NDArray[np.float64]
    l: float
    det_h: float
    e0: float
    z_prime: NDArray[np.float64]


def _points(x: ArrayLike | QuadratureSet) -> NDArray[np.float64]:
    if isinstance(x, QuadratureSet):
        return x.nodes
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1, 3))


def v_free(x: ArrayLike | QuadratureSet, tau: float, s: SourceSpec, bquad: QuadratureSet) -> ResolventField:
    """(1/4pi) int_B exp(-tau|x-y|)/|x-y| f(y) dy and its gradient, by quadrature over B."""
    targets = _points(x)
    if np.any(geometry.dist_point_region(targets, s.region) <= 0):
        raise domain_error("free resolvent evaluated inside the closure of B")
    strengths = bquad.weights * source_values(s, bquad.nodes)
    values = np.empty(targets.shape[0])
    grads = np.empty((targets.shape[0], 3))
    stencil.yukawa_field(targets, np.ascontiguousarray(bquad.nodes), strengths, float(tau), values, grads)
    return ResolventField(points=targets, tau=tau, values=values, gradients=grads)


def ball_mean_factor(kappa: float, rho: float) -> float:
    """Ball average of a solution of (Delta - kappa^2) g = 0 divided by its centre value."""
    a = kappa * rho
    if a < 1e-4:
        return 1.0 + a * a / 10.0
    return 3.0 * (a * math.cosh(a) - math.sinh(a)) / a**3


def v_free_ball(
    x: ArrayLike, tau: float, center: Sequence[float], rho: float, c1: float = 1.0, *, allow_inside: bool = False
) -> ResolventField:
    """Closed form for f = c1 on the ball B_rho(p); needs R = |x - p| > rho unless ``allow_inside``.

    Inside the ball v = c1/tau^2 - c1 (1 + tau rho) exp(-tau rho) sinh(tau R) / (tau^3 R).
    """
    targets = _points(x)
    offset = targets - np.asarray(center, dtype=np.float64)
    R = np.linalg.norm(offset, axis=1)
    inner = R <= rho
    if inner.any() and not allow_inside:
        raise domain_error("closed-form ball resolvent needs |x - p| > rho")
    a = tau * rho
    values = np.empty_like(R)
    grads = np.zeros_like(offset)

    outer = ~inner
    Ro = R[outer]
    values[outer] = c1 * np.exp(-tau * Ro) * (a * math.cosh(a) - math.sinh(a)) / (tau**3 * Ro)
    grads[outer] = -((tau + 1.0 / Ro) * values[outer] / Ro)[:, None] * offset[outer]

    if inner.any():
        amp = c1 * (1.0 + a) * math.exp(-a) / tau**3
        Ri = R[inner]
        tr = tau * Ri
        small = tr < 1e-6
        safe = np.where(small, 1.0, Ri)
        # sinh(tau R)/R and R^-1 d/dR of it, with their R -> 0 limits
        shape = np.where(small, tau * (1.0 + tr * tr / 6.0), np.sinh(tr) / safe)
        slope = np.where(small, tau**3 / 3.0, (tr * np.cosh(tr) - np.sinh(tr)) / safe**3)
        values[inner] = c1 / tau**2 - amp * shape
        grads[inner] = -(amp * slope)[:, None] * offset[inner]
    return ResolventField(points=targets, tau=tau, values=values, gradients=grads)


def grad_norm_sq_free(
    d_region: Region, s: SourceSpec, tau: float, spacing: float, anchor: Sequence[float] = (0.0, 0.0, 0.0)
) -> float:
    """int_D |grad v|^2 dx with v the free-space resolvent."""
    geometry.dist_sets(d_region, s.region)
    dquad = geometry.sample_region(d_region, spacing, anchor)
    bquad = geometry.sample_region(s.region, spacing, anchor)
    field = v_free(dquad, tau, s, bquad)
    return float(np.sum(dquad.weights * np.sum(field.gradients**2, axis=1)))


def grad_norm_sq_triple(
    d_region: Region, s: SourceSpec, tau: float, spacing: float, anchor: Sequence[float] = (0.0, 0.0, 0.0)
) -> float:
    """Direct triple sum over D x B x B of the product of differentiated kernels."""
    geometry.dist_sets(d_region, s.region)
    dquad = geometry.sample_region(d_region, spacing, anchor)
    bquad = geometry.sample_region(s.region, spacing, anchor)
    fw = bquad.weights * source_values(s, bquad.nodes)
    total = 0.0
    for x, wx in zip(dquad.nodes, dquad.weights):
        diff = x - bquad.nodes
        r = np.linalg.norm(diff, axis=1)
        amplitude = (tau + 1.0 / r) * np.exp(-tau * r) / r * fw
        unit = diff / r[:, None]
        cosines = unit @ unit.T
        total += wx * float(amplitude @ cosines @ amplitude)
    return total / (4.0 * math.pi) ** 2


def stepper_consistent_tau(tau: float, dt: float) -> float:
    """Decay rate whose grid resolvent is the exact discrete Laplace transform of the leapfrog solution."""
    return 2.0 / dt * math.sinh(0.5 * tau * dt)


def solve_shifted(
    operator: FluxOperator,
    rhs: NDArray[np.float64],
    shift: float,
    tolerance: float,
    max_iterations: int,
) -> tuple[NDArray[np.float64], SolveInfo]:
    """Solve (shift - L) u = rhs by Jacobi-preconditioned CG."""
    shape = operator.shape
    n = int(np.prod(shape))
    inv_h2 = 1.0 / operator.grid.h**2
    scratch = np.empty(shape)

    def matvec(v):
        stencil.shifted_operator(
            np.ascontiguousarray(v).reshape(shape), operator.kx, operator.ky, operator.kz, inv_h2, shift, scratch
        )
        return scratch.ravel().copy()

    inv_diag = (1.0 / (shift + operator.diagonal())).ravel()
    A = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    M = LinearOperator((n, n), matvec=lambda v: inv_diag * np.ravel(v), dtype=np.float64)

    b = np.ascontiguousarray(rhs, dtype=np.float64).ravel()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(shape), SolveInfo(iterations=0, residual=0.0)

    count = [0]

    def callback(_):
        count[0] += 1

    x = np.zeros(n)
    residual = math.inf
    for _ in range(_CG_RESTARTS + 1):
        x, info = cg(A, b, x0=x, rtol=tolerance, atol=0.0, maxiter=max_iterations, M=M, callback=callback)
        residual = float(np.linalg.norm(b - A.matvec(x))) / b_norm
        if info > 0:
            raise EnclosureError(
                exit_code=ExitCode.NUMERICAL,
                code=ErrorCode.NO_CONVERGENCE,
                message=f"CG did not reach relative residual {tolerance:g} in {max_iterations} iterations",
                detail={"residual": residual, "iterations": count[0]},
            )
        if residual <= tolerance:
            break
    logger.debug("CG: %d iterations, relative residual %.3e (shift %.6g)", count[0], residual, shift)
    return x.reshape(shape), SolveInfo(iterations=count[0], residual=residual)


def check_decay_padding(grid: SpatialGrid, boxes: list[tuple[NDArray, NDArray]], tau: float, gamma_max: float) -> None:
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    actual = float(min(np.min(lo - np.asarray(grid.origin)), np.min(np.asarray(grid.upper) - hi)))
    required = 10.0 * math.sqrt(gamma_max) / tau
    if actual < required:
        raise EnclosureError(
            exit_code=ExitCode.STABILITY,
            code=ErrorCode.PADDING_VIOLATION,
            message=f"resolvent grid padding {actual:.6g} is below the decay padding {required:.6g}",
            detail={"padding": actual, "required_padding": required},
        )


def grid_for_resolvent(
    regions: list[Region], points: ArrayLike | None, tau_min: float, gamma_max: float, h: float, margin_cells: int = 2
) -> SpatialGrid:
    """h-aligned box around the regions and points with the decay padding for tau_min."""
    boxes = [geometry.bounding_box(r) for r in regions]
    if points is not None:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        boxes.append((pts.min(axis=0), pts.max(axis=0)))
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    pad = 10.0 * math.sqrt(gamma_max) / tau_min + margin_cells * h
    lo_idx = np.floor((lo - pad) / h)
    hi_idx = np.ceil((hi + pad) / h)
    return SpatialGrid(
        origin=tuple(float(v) for v in lo_idx * h),
        extent=tuple(float(v) for v in (hi_idx - lo_idx) * h),
        h=h,
    )


def v_grid(
    m: MediumField, s: SourceSpec, tau: float, spec: HelmholtzSolveSpec, shift: float | None = None
) -> tuple[NDArray[np.float64], SolveInfo]:
    """Grid solution of (tau^2 - L) v = f for any sampled medium."""
    operator = FluxOperator.from_medium(m, spec.grid)
    f = source_field(s, spec.grid)
    return solve_shifted(operator, f, tau * tau if shift is None else shift, spec.tolerance, spec.max_iterations)


def _gamma_max(background: TwoLayer) -> float:
    return max(background.gamma_plus, background.gamma_minus)


def v_layered(
    eval_points: ArrayLike | QuadratureSet, tau: float, s: SourceSpec, background: TwoLayer, spec: HelmholtzSolveSpec
) -> ResolventField:
    if tau < 1:
        raise domain_error(f"layered resolvent needs tau >= 1, got {tau!r}")
    targets = _points(eval_points)
    if np.any(geometry.dist_point_region(targets, s.region) <= 0):
        raise domain_error("layered resolvent evaluated inside the closure of B")
    boxes = [geometry.bounding_box(s.region), (targets.min(axis=0), targets.max(axis=0))]
    check_decay_padding(spec.grid, boxes, tau, _gamma_max(background))

    field, info = v_grid(MediumField(background=background), s, tau, spec)
    sampler = TrilinearSampler(spec.grid, targets)
    gradient_fields = np.gradient(field, spec.grid.h)
    grads = np.column_stack([sampler(np.ascontiguousarray(g)) for g in gradient_fields])
    logger.info("Layered resolvent at tau=%.4g: %d CG iterations", tau, info.iterations)
    return ResolventField(
        points=targets,
        tau=tau,
        values=sampler(field),
        gradients=grads,
        residual=info.residual,
        iterations=info.iterations,
    )


def grad_norm_sq_layered(
    d_region: Region, s: SourceSpec, tau: float, background: TwoLayer, spec: HelmholtzSolveSpec
) -> float:
    dquad = geometry.sample_region(d_region, spec.grid.h, anchor=spec.grid.origin)
    field = v_layered(dquad, tau, s, background, spec)
    return float(np.sum(dquad.weights * np.sum(field.gradients**2, axis=1)))


def phi0_asymptotic(
    x: ArrayLike, y: ArrayLike, tau: float, gamma_plus: float, gamma_minus: float
) -> AsymptoticKernel:
    """Leading term of the layered fundamental solution for x below and y above the interface."""
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    z = optical.snell_point(xv, yv, gamma_plus, gamma_minus)
    zt = np.append(z, 0.0)
    l = float(optical.l_path(xv, yv, z, gamma_plus, gamma_minus))
    det_h = float(np.linalg.det(optical.hessian(xv, yv, z, gamma_plus, gamma_minus)))

    a0 = math.sqrt(gamma_minus / gamma_plus)
    depth = abs(xv[2])
    r_lo = float(np.linalg.norm(xv - zt))
    r_hi = float(np.linalg.norm(zt - yv))
    rho = float(np.linalg.norm(xv[:2] - z))
    root = math.sqrt(a0 * a0 * r_lo * r_lo - rho * rho)
    e0 = 4.0 * math.sqrt(gamma_minus) * depth * root / (r_lo * (root + a0 * a0 * depth))

    amplitude = e0 / (8.0 * math.pi * gamma_plus * gamma_minus * math.sqrt(det_h) * r_lo * r_hi)
    log_value = -tau * l + math.log(amplitude)
    value = math.exp(log_value)
    gradient = value * (-tau / math.sqrt(gamma_minus)) * (xv - zt) / r_lo
    return AsymptoticKernel(value=value, log_value=log_value, gradient=gradient, l=l, det_h=det_h, e0=e0, z_prime=z)


def tail_transform(
    operator: FluxOperator,
    tail: tuple[NDArray[np.float64], NDArray[np.float64]],
    dt: float,
    tau: float,
    tolerance: float,
    max_iterations: int,
) -> tuple[NDArray[np.float64], SolveInfo]:
    """dt * sum_{m>=0} exp(-tau m dt) a_m - (dt/2) a_0 for the leapfrog continuation of (a_0, a_1).

    The continuation obeys (4 sinh^2(tau dt/2) - dt^2 L) A = (z - 2) a_0 + a_1 - dt^2 L a_0
    with z = exp(tau dt) and A the generating sum, so no time stepping past T is needed.
    """
    a0, a1 = tail
    z = math.exp(tau * dt)
    rhs = (z - 2.0) * a0 + a1 - dt * dt * operator.apply(a0)
    shift = stepper_consistent_tau(tau, dt) ** 2
    scaled, info = solve_shifted(operator, rhs / dt, shift, tolerance, max_iterations)
    return scaled - 0.5 * dt * a0, info


def point_source_factor(source: SourceSpec, bquad: QuadratureSet, tau: float, gamma: float) -> float:
    """Strength of the point source equivalent to a small ball source in a layer with coefficient gamma."""
    if not isinstance(source.region, Ball):
        raise domain_error("point-source equivalence needs a ball source")
    kappa = tau / math.sqrt(gamma)
    return source.signed_amplitude * bquad.volume * ball_mean_factor(kappa, source.region.radius)
