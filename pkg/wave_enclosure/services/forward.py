"""
Leapfrog solver for u_tt = div(gamma grad u) with u(0) = 0, u_t(0) = f.

The domain is truncated by causality padding: the box is large enough that
nothing reflected at its faces can return to B before time T.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from wave_enclosure.core.config import get_settings
from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.forward import CflReport, GridSpec, SourceSpec, cfl_limit, padding_required
from wave_enclosure.schemas.medium import MediumField
from wave_enclosure.services import geometry, medium as medium_service, stencil
from wave_enclosure.services.geometry import QuadratureSet
from wave_enclosure.services.grid import FluxOperator, TrilinearSampler, source_field

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TraceSet:
    nodes: QuadratureSet
    times: NDArray[np.float64]
    values: NDArray[np.float64]
    energy: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if self.values.shape != (self.times.shape[0], len(self.nodes)):
            raise EnclosureError(
                exit_code=ExitCode.INVALID_INPUT,
                code=ErrorCode.DIMENSION_MISMATCH,
                message=f"trace matrix {self.values.shape} does not match "
                f"{self.times.shape[0]} times x {len(self.nodes)} nodes",
            )

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])


@dataclass
class PairRun:
    """Traces with and without the inclusion plus the background state at T and T + dt."""

    trace: TraceSet
    background_trace: TraceSet
    background_tail: tuple[NDArray[np.float64], NDArray[np.float64]]
    background_operator: FluxOperator
    grid: GridSpec
    extras: dict = field(default_factory=dict)


def _padding_regions(m: MediumField, source: SourceSpec):
    lo, hi = geometry.bounding_box(source.region)
    boxes = [(lo - source.support_margin, hi + source.support_margin)]
    if m.inclusion is not None:
        boxes.append(geometry.bounding_box(m.inclusion.region))
    return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


def cfl_check(g: GridSpec, m: MediumField, safety: float | None = None) -> CflReport:
    safety = get_settings().cfl_safety if safety is None else safety
    speed = medium_service.c_max(m)
    dt_max = cfl_limit(g.h, speed, safety)
    ok = g.dt <= dt_max * (1.0 + 1e-12)
    return CflReport(ok=ok, dt=g.dt, dt_max=dt_max, c_max=speed, suggested_dt=None if ok else dt_max)


def check_padding(g: GridSpec, m: MediumField, source: SourceSpec, T: float) -> None:
    lo, hi = _padding_regions(m, source)
    actual = float(min(np.min(lo - np.asarray(g.origin)), np.min(np.asarray(g.upper) - hi)))
    required = padding_required(medium_service.c_max(m), T)
    if actual <= required:
        raise EnclosureError(
            exit_code=ExitCode.STABILITY,
            code=ErrorCode.PADDING_VIOLATION,
            message=f"grid padding {actual:.6g} must exceed c_max*T/2 = {required:.6g}",
            detail={"padding": actual, "required_padding": required},
        )


def grid_for(
    m: MediumField,
    source: SourceSpec,
    T: float,
    h: float,
    cfl_safety: float | None = None,
    margin_cells: int = 2,
) -> GridSpec:
    """Smallest h-aligned box satisfying the causality padding, with dt at the CFL limit and steps*dt = T."""
    safety = get_settings().cfl_safety if cfl_safety is None else cfl_safety
    lo, hi = _padding_regions(m, source)
    pad = padding_required(medium_service.c_max(m), T) + margin_cells * h
    lo_idx = np.floor((lo - pad) / h)
    hi_idx = np.ceil((hi + pad) / h)
    dt_max = cfl_limit(h, medium_service.c_max(m), safety)
    steps = max(1, math.ceil(T / dt_max - 1e-12))
    grid = GridSpec(
        origin=tuple(float(v) for v in lo_idx * h),
        extent=tuple(float(v) for v in (hi_idx - lo_idx) * h),
        h=h,
        dt=T / steps,
        steps=steps,
    )
    logger.debug("Grid %s, h=%g, dt=%g, steps=%d", grid.shape, h, grid.dt, steps)
    return grid


def energy(
    state: tuple[NDArray[np.float64], NDArray[np.float64]],
    m: MediumField,
    g: GridSpec,
    operator: FluxOperator | None = None,
) -> float:
    """E = 1/2 sum h^3 [((u1 - u0)/dt)^2 + u1 . (-L u0)], conserved by the leapfrog scheme."""
    op = operator if operator is not None else FluxOperator.from_medium(m, g.spatial())
    u_prev, u_curr = state
    velocity = (u_curr - u_prev) / g.dt
    stiffness = -np.vdot(u_curr, op.apply(u_prev))
    return 0.5 * g.cell_volume * (float(np.vdot(velocity, velocity)) + float(stiffness))


class WaveSolver:
    """Two-level leapfrog state; starts at (u^0, u^1) = (0, dt*f)."""

    def __init__(self, m: MediumField, source: SourceSpec, grid: GridSpec, operator: FluxOperator | None = None):
        self.medium = m
        self.grid = grid
        self.operator = operator if operator is not None else FluxOperator.from_medium(m, grid.spatial())
        self.f = source_field(source, grid.spatial())
        self.u_prev = np.zeros(grid.shape)
        self.u_curr = grid.dt * self.f
        self._scratch = np.empty(grid.shape)
        self._courant_sq = (grid.dt / grid.h) ** 2
        self._step_count = 1

    @property
    def step_count(self) -> int:
        return self._step_count

    @property
    def time(self) -> float:
        return self._step_count * self.grid.dt

    def step(self) -> None:
        op = self.operator
        stencil.leapfrog_step(self.u_prev, self.u_curr, op.kx, op.ky, op.kz, self._courant_sq, self._scratch)
        self.u_prev, self.u_curr, self._scratch = self.u_curr, self._scratch, self.u_prev
        self._step_count += 1

    def energy(self) -> float:
        return energy((self.u_prev, self.u_curr), self.medium, self.grid, self.operator)


def _prepare(m: MediumField, source: SourceSpec, g: GridSpec, T: float | None) -> float:
    medium_service.require_valid(m, source.region)
    horizon = g.T if T is None else T
    if abs(g.steps * g.dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.GRID_MISMATCH,
            message=f"steps*dt = {g.steps * g.dt!r} does not equal T = {horizon!r}",
        )
    report = cfl_check(g, m)
    if not report.ok:
        raise EnclosureError(
            exit_code=ExitCode.STABILITY,
            code=ErrorCode.CFL_VIOLATION,
            message=f"dt = {g.dt:.6g} exceeds the stable limit; use dt <= {report.dt_max:.17g}",
            detail={"dt": g.dt, "suggested_dt": report.suggested_dt},
        )
    check_padding(g, m, source, horizon)
    return horizon


def _finite_or_raise(values: NDArray[np.float64]) -> None:
    if not np.all(np.isfinite(values)):
        raise EnclosureError(
            exit_code=ExitCode.NUMERICAL,
            code=ErrorCode.NO_CONVERGENCE,
            message="simulation produced non-finite trace values",
        )


def simulate(
    m: MediumField,
    source: SourceSpec,
    g: GridSpec,
    T: float | None = None,
    *,
    nodes: QuadratureSet | None = None,
    energy_every: int = 0,
) -> TraceSet:
    """Traces u(t_k, x_q) at B's quadrature nodes for t_k = k*dt, k = 0..steps."""
    _prepare(m, source, g, T)
    if nodes is None:
        nodes = geometry.sample_region(source.region, g.h, anchor=g.origin)
    sampler = TrilinearSampler(g.spatial(), nodes.nodes)
    solver = WaveSolver(m, source, g)

    values = np.zeros((g.steps + 1, len(nodes)))
    values[1] = sampler(solver.u_curr)
    energies = [solver.energy()] if energy_every > 0 else None
    for k in range(2, g.steps + 1):
        solver.step()
        values[k] = sampler(solver.u_curr)
        if energies is not None and k % energy_every == 0:
            energies.append(solver.energy())
        if k % 100 == 0:
            logger.debug("step %d/%d", k, g.steps)
    _finite_or_raise(values)
    if energies is not None:
        drift = abs(energies[-1] - energies[0]) / abs(energies[0])
        logger.debug("Energy drift over run: %.3e", drift)

    return TraceSet(
        nodes=nodes,
        times=np.arange(g.steps + 1) * g.dt,
        values=values,
        energy=None if energies is None else np.asarray(energies),
    )


def simulate_pair(
    m: MediumField,
    source: SourceSpec,
    g: GridSpec,
    T: float | None = None,
    *,
    nodes: QuadratureSet | None = None,
) -> PairRun:
    """Run the medium and its background side by side on one grid."""
    _prepare(m, source, g, T)
    if nodes is None:
        nodes = geometry.sample_region(source.region, g.h, anchor=g.origin)
    sampler = TrilinearSampler(g.spatial(), nodes.nodes)
    background = m.without_inclusion()
    base = WaveSolver(background, source, g)
    full = WaveSolver(m, source, g) if m.inclusion is not None else None

    times = np.arange(g.steps + 1) * g.dt
    u0 = np.zeros((g.steps + 1, len(nodes)))
    u = np.zeros_like(u0)
    u0[1] = sampler(base.u_curr)
    u[1] = sampler(full.u_curr) if full is not None else u0[1]
    logger.info("Simulating %d steps on grid %s (%d cells)", g.steps, g.shape, int(np.prod(g.shape)))
    for k in range(2, g.steps + 1):
        base.step()
        u0[k] = sampler(base.u_curr)
        if full is not None:
            full.step()
            u[k] = sampler(full.u_curr)
        else:
            u[k] = u0[k]
    _finite_or_raise(u)
    _finite_or_raise(u0)

    at_T = base.u_curr.copy()
    base.step()
    tail = (at_T, base.u_curr.copy())
    return PairRun(
        trace=TraceSet(nodes=nodes, times=times, values=u),
        background_trace=TraceSet(nodes=nodes, times=times.copy(), values=u0),
        background_tail=tail,
        background_operator=base.operator,
        grid=g,
        extras={"source_field": base.f},
    )
