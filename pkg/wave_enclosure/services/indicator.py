"""
Indicator functions, large-tau slope extraction and enclosure reconstruction.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq
from scipy.stats import kendalltau

from wave_enclosure.core.config import get_settings
from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.forward import SourceSpec
from wave_enclosure.schemas.geometry import Ball, Region
from wave_enclosure.schemas.medium import Background, MonotonicityTag, TwoLayer
from wave_enclosure.schemas.results import (
    EquivalenceReport,
    HorizonReport,
    IndicatorSeries,
    ProbeResult,
    SignReport,
    SlopeFit,
)
from wave_enclosure.services import geometry, optical
from wave_enclosure.services.forward import TraceSet
from wave_enclosure.services.geometry import QuadratureSet
from wave_enclosure.services.grid import source_values

logger = logging.getLogger(__name__)


def laplace_weights(times: NDArray[np.float64], tau: float) -> NDArray[np.float64]:
    """Composite trapezoid weights on a uniform grid times exp(-tau t)."""
    dt = float(times[1] - times[0])
    w = np.full(times.shape[0], dt)
    w[0] = w[-1] = 0.5 * dt
    return w * np.exp(-tau * times)


def laplace_transform_traces(tr: TraceSet, tau: float) -> NDArray[np.float64]:
    """w(x_q; tau) = int_0^T exp(-tau t) u(t, x_q) dt at every node."""
    return laplace_weights(tr.times, tau) @ tr.values


def pair_with_source(values: NDArray[np.float64], s: SourceSpec, bquad: QuadratureSet) -> float:
    return float(np.sum(bquad.weights * source_values(s, bquad.nodes) * values))


def indicator(
    w_values: ArrayLike, v_values: ArrayLike, s: SourceSpec, bquad: QuadratureSet, tau: float
) -> float:
    """I_tau = int_B f (w - v)."""
    w = np.asarray(w_values, dtype=np.float64)
    v = np.asarray(v_values, dtype=np.float64)
    if w.shape != v.shape or w.shape != (len(bquad),):
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.DIMENSION_MISMATCH,
            message=f"w {w.shape} and v {v.shape} must both match {len(bquad)} quadrature nodes",
        )
    return pair_with_source(w - v, s, bquad)


def indicator_tilde(tr_u: TraceSet, tr_u0: TraceSet, s: SourceSpec, bquad: QuadratureSet, tau: float) -> float:
    """Laplace transform of int_B f (u - u0), taking the trace difference first."""
    same_times = tr_u.times.shape == tr_u0.times.shape and np.array_equal(tr_u.times, tr_u0.times)
    same_nodes = tr_u.nodes.nodes.shape == tr_u0.nodes.nodes.shape and np.array_equal(
        tr_u.nodes.nodes, tr_u0.nodes.nodes
    )
    if not (same_times and same_nodes) or len(bquad) != len(tr_u.nodes):
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.GRID_MISMATCH,
            message="traces with and without the inclusion must share time grid and nodes",
        )
    diff = laplace_weights(tr_u.times, tau) @ (tr_u.values - tr_u0.values)
    return pair_with_source(diff, s, bquad)


def perturb(series: IndicatorSeries, level: float, rng: np.random.Generator) -> IndicatorSeries:
    """Multiplicative measurement noise: every value times 1 + level * N(0, 1)."""
    if level <= 0:
        return series
    values = np.asarray(series.values) * (1.0 + level * rng.standard_normal(len(series.values)))
    return series.model_copy(update={"values": [float(v) for v in values]})


def _design(taus: NDArray[np.float64], scale: float) -> NDArray[np.float64]:
    return np.column_stack([-scale * taus, np.log(taus), np.ones_like(taus)])


def extract_length(
    series: IndicatorSeries,
    scale: float = 2.0,
    threshold: float | None = None,
    min_points: int | None = None,
) -> SlopeFit:
    """Fit log|I| = -scale*L*tau + p*log(tau) + c on the widest suffix window that fits within the threshold."""
    settings = get_settings()
    threshold = settings.fit_residual_threshold if threshold is None else threshold
    min_points = settings.fit_min_points if min_points is None else min_points

    taus = np.asarray(series.taus, dtype=np.float64)
    values = np.abs(np.asarray(series.values, dtype=np.float64))
    keep = values > settings.numeric_floor
    dropped = [float(t) for t in taus[~keep]]
    if dropped:
        logger.warning("Dropped %d points at or below the numeric floor: %s", len(dropped), dropped)
    if not keep.any():
        raise EnclosureError(
            exit_code=ExitCode.NUMERICAL,
            code=ErrorCode.ALL_BELOW_FLOOR,
            message=f"all {taus.size} indicator values are at or below {settings.numeric_floor:g}",
        )
    taus, logs = taus[keep], np.log(values[keep])

    for start in range(0, taus.size - min_points + 1):
        window_t, window_y = taus[start:], logs[start:]
        design = _design(window_t, scale)
        coef, *_ = np.linalg.lstsq(design, window_y, rcond=None)
        resid = window_y - design @ coef
        if np.max(np.abs(resid)) <= threshold:
            fit = SlopeFit(
                L_hat=float(coef[0]),
                p_hat=float(coef[1]),
                c_hat=float(coef[2]),
                residual=float(np.sqrt(np.mean(resid**2))),
                window=(float(window_t[0]), float(window_t[-1])),
                n_points=int(window_t.size),
                scale=scale,
                dropped_taus=dropped,
            )
            logger.info("Fit L=%.6g over tau in [%.4g, %.4g] (%d points)", fit.L_hat, *fit.window, fit.n_points)
            return fit
    raise EnclosureError(
        exit_code=ExitCode.NUMERICAL,
        code=ErrorCode.WINDOW_EMPTY,
        message=f"no window of >= {min_points} points fits within residual {threshold:g}",
    )


def _expected_sign(tag: MonotonicityTag | None) -> int:
    return {"M_plus": -1, "M_minus": 1}.get(tag or "", 0)


def sign_check(series: IndicatorSeries, tag: MonotonicityTag | None, window_start: float | None = None) -> SignReport:
    """Large-tau sign law: I < 0 for an inclusion above the background, I > 0 below it."""
    expected = _expected_sign(tag)
    if expected == 0:
        return SignReport(passed=False, tag=tag, expected_sign=0, checked=0, note="no sign law for this medium")
    checked = 0
    for tau, value in zip(series.taus, series.values):
        if window_start is not None and tau < window_start:
            continue
        checked += 1
        if np.sign(value) != expected:
            return SignReport(passed=False, tag=tag, expected_sign=expected, checked=checked, first_violation_tau=tau)
    return SignReport(passed=checked > 0, tag=tag, expected_sign=expected, checked=checked)


def horizon_check(series: IndicatorSeries, T: float | None = None) -> HorizonReport:
    """exp(tau T)|I| over the upper half of the tau grid; decreasing when T < 2L."""
    horizon = series.T if T is None else T
    half = len(series.taus) // 2
    taus = np.asarray(series.taus[half:])
    with np.errstate(divide="ignore"):
        scaled = taus * horizon + np.log(np.abs(np.asarray(series.values[half:])))
    return HorizonReport(
        decreasing=bool(np.all(np.diff(scaled) < 0)),
        taus=[float(t) for t in taus],
        log_scaled=[float(v) for v in scaled],
    )


def equivalence_trend(
    standard: IndicatorSeries,
    tilde: IndicatorSeries,
    f_norm_sq: float,
    window: tuple[float, float] | None = None,
    scaled_gap: Sequence[float] | None = None,
) -> EquivalenceReport:
    """tau * exp(tau T) |I - I~| / |f|^2 along the grid, with its Kendall trend against tau.

    ``scaled_gap`` carries exp(tau T)(I - I~) when it was computed without cancellation.
    """
    taus = np.asarray(standard.taus)
    with np.errstate(divide="ignore"):
        if scaled_gap is not None:
            log_gap = np.log(np.abs(np.asarray(scaled_gap, dtype=np.float64)))
        else:
            log_gap = standard.T * taus + np.log(np.abs(np.asarray(standard.values) - np.asarray(tilde.values)))
    stat = np.exp(np.log(taus) + log_gap - math.log(f_norm_sq))
    mask = np.ones_like(taus, dtype=bool)
    if window is not None:
        mask = (taus >= window[0]) & (taus <= window[1])
    t_win, s_win = taus[mask], stat[mask]
    trend = float(kendalltau(t_win, s_win).statistic) if t_win.size > 1 else 0.0
    if not math.isfinite(trend):
        trend = 0.0
    ratio = float(np.max(s_win) / s_win[0]) if s_win.size and s_win[0] > 0 else math.inf
    return EquivalenceReport(
        taus=[float(t) for t in t_win],
        statistic=[float(v) for v in s_win],
        kendall_tau=trend,
        ratio_to_first=ratio,
        passed=trend <= 0 and ratio <= 10.0,
    )


def probe_sphere(center: Sequence[float], distance: float, count: int = 26) -> NDArray[np.float64]:
    dirs = geometry.cube_directions() if count == 26 else geometry.fibonacci_directions(count)
    return np.asarray(center, dtype=np.float64) + distance * dirs


def exact_probe_results(
    d_region: Region, centers: ArrayLike, radius: float, background: Background
) -> list[ProbeResult]:
    results = []
    for p in np.asarray(centers, dtype=np.float64).reshape(-1, 3):
        probe = Ball(center=tuple(p), radius=radius)
        if isinstance(background, TwoLayer):
            L, _, _ = optical.min_optical_distance(d_region, probe, background.gamma_plus, background.gamma_minus)
            variant = "two_layer"
        else:
            L = geometry.dist_sets(d_region, probe)
            variant = "homogeneous"
        results.append(ProbeResult(p=tuple(p), r=radius, L_hat=L, variant=variant))
    return results


class Enclosure:
    """Intersection of the probe exclusion sets; a point passes when every margin is positive."""

    def __init__(self, probes: list[ProbeResult], background: Background):
        if not probes:
            raise ValueError("enclosure needs at least one probe")
        self.probes = probes
        self.background = background
        self.centers = np.array([p.p for p in probes], dtype=np.float64)
        if isinstance(background, TwoLayer):
            self.thresholds = np.array([p.L_hat + p.r / math.sqrt(background.gamma_plus) for p in probes])
        else:
            self.thresholds = np.array([p.L_hat + p.r for p in probes])

    def margin(self, points: ArrayLike) -> NDArray[np.float64]:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if isinstance(self.background, TwoLayer):
            bg = self.background
            out = -pts[:, 2].copy()
            below = pts[:, 2] < 0
            if below.any():
                lower = pts[below]
                times = np.column_stack(
                    [optical.optical_distance(lower, c, bg.gamma_plus, bg.gamma_minus) for c in self.centers]
                )
                out[below] = np.minimum(out[below], np.min(times - self.thresholds, axis=1))
            return out
        dists = np.linalg.norm(pts[:, None, :] - self.centers[None, :, :], axis=2)
        return np.min(dists - self.thresholds, axis=1)

    def contains(self, points: ArrayLike) -> NDArray[np.bool_]:
        return self.margin(points) > 0

    def ray_exit(self, center: NDArray[np.float64], direction: NDArray[np.float64], r_max: float, steps: int = 400) -> float:
        """Distance along the ray to the first predicate boundary crossing (r_max if none)."""
        f = lambda s: float(self.margin(center + s * direction)[0])  # noqa: E731
        ds = r_max / steps
        prev = 0.0
        for k in range(1, steps + 1):
            s = k * ds
            if f(s) <= 0:
                return brentq(f, prev, s, xtol=1e-12)
            prev = s
        return r_max

    def boundary_samples(self, center: ArrayLike, count: int, r_max: float) -> NDArray[np.float64]:
        c = np.asarray(center, dtype=np.float64)
        if not self.contains(c)[0]:
            raise EnclosureError(
                exit_code=ExitCode.INVALID_INPUT,
                code=ErrorCode.DOMAIN,
                message="boundary sampling needs a centre inside the enclosure",
            )
        dirs = geometry.fibonacci_directions(count)
        radii = np.array([self.ray_exit(c, d, r_max) for d in dirs])
        return c + radii[:, None] * dirs


def enclosure(probes: list[ProbeResult], background: Background) -> Enclosure:
    return Enclosure(probes, background)


def _region_exit(region: Region, center: NDArray[np.float64], direction: NDArray[np.float64], r_max: float) -> float:
    if isinstance(region, Ball):
        offset = center - np.asarray(region.center)
        b = float(offset @ direction)
        c = float(offset @ offset) - region.radius**2
        return -b + math.sqrt(max(b * b - c, 0.0))
    s = np.linspace(0.0, r_max, 4001)
    inside = geometry.contains(region, center + s[:, None] * direction)
    outside = np.nonzero(~inside)[0]
    return float(s[outside[0]]) if outside.size else r_max


def hausdorff_excess(
    encl: Enclosure, region: Region, center: ArrayLike, directions: ArrayLike, r_max: float
) -> float:
    """Largest outward gap, along the given directions, between the enclosure boundary and the region boundary."""
    c = np.asarray(center, dtype=np.float64)
    excess = 0.0
    for d in np.asarray(directions, dtype=np.float64).reshape(-1, 3):
        d = d / np.linalg.norm(d)
        excess = max(excess, encl.ray_exit(c, d, r_max) - _region_exit(region, c, d, r_max))
    return excess
