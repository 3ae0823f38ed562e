"""
Desk-scale property suites behind ``wave-enclosure verify``.

Each check is small enough to run in seconds and returns a CheckResult
instead of raising, so one failing property never hides the others.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np

from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.forward import SourceSpec
from wave_enclosure.schemas.geometry import Ball, Box, Cone, RegionUnion
from wave_enclosure.schemas.medium import Homogeneous, InclusionSpec, MediumField
from wave_enclosure.schemas.results import CheckResult, IndicatorSeries
from wave_enclosure.services import forward, geometry, indicator, medium, optical, resolvent
from wave_enclosure.services.forward import TraceSet
from wave_enclosure.services.grid import TrilinearSampler

logger = logging.getLogger(__name__)

Check = Callable[[np.random.Generator], CheckResult]


def _result(suite: str, name: str, passed: bool, detail: str = "") -> CheckResult:
    return CheckResult(suite=suite, name=name, passed=bool(passed), detail=detail)


def random_pairs(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Random x below and y above the interface, with random layer coefficients."""
    x = np.column_stack([rng.uniform(-2, 2, count), rng.uniform(-2, 2, count), -rng.uniform(0.2, 3, count)])
    y = np.column_stack([rng.uniform(-2, 2, count), rng.uniform(-2, 2, count), rng.uniform(0.2, 3, count)])
    gp = rng.uniform(0.5, 5, count)
    gm = rng.uniform(0.5, 5, count)
    return x, y, gp, gm


# geometry


def _contains_examples(rng) -> CheckResult:
    ball = Ball(center=(0, 0, 0), radius=1)
    box = Box(min=(0, 0, 0), max=(1, 1, 1))
    ok = (
        geometry.contains(ball, (0, 0, 0))
        and not geometry.contains(ball, (0, 0, 1))
        and geometry.contains(box, (0.5, 0.5, 0.5))
    )
    return _result("geometry", "contains_examples", ok)


def _ball_distances(rng) -> CheckResult:
    a, b = Ball(center=(0, 0, -3), radius=1), Ball(center=(0, 0, 3), radius=1)
    c, d = Ball(center=(0, 0, 0), radius=1), Ball(center=(0, 0, 4), radius=0.5)
    values = (geometry.dist_sets(a, b), geometry.dist_sets(b, a), geometry.dist_sets(c, d))
    ok = values[0] == 4.0 and values[1] == values[0] and abs(values[2] - 2.5) < 1e-15
    return _result("geometry", "ball_distances", ok, f"{values}")


def _box_ball_brute(rng) -> CheckResult:
    box = Box(min=(1.0, -0.5, 0.2), max=(2.0, 0.7, 1.3))
    ball = Ball(center=(-0.4, 0.3, -0.6), radius=0.35)
    exact = geometry.dist_sets(box, ball)
    surface = geometry.surface_samples(box, 200_000)
    brute = float(np.min(np.linalg.norm(surface - np.asarray(ball.center), axis=1))) - ball.radius
    return _result("geometry", "box_ball_brute", abs(exact - brute) < 1e-3, f"{exact:.9g} vs {brute:.9g}")


def _union_support(rng) -> CheckResult:
    union = RegionUnion(parts=(Ball(center=(0, 0, 0), radius=1), Ball(center=(2, 1, 0), radius=0.5)))
    dirs = geometry.fibonacci_directions(64)
    h = geometry.support_function(union, dirs)
    nodes = geometry.sample_region(union, 0.05).nodes
    sampled = np.max(nodes @ dirs.T, axis=0)
    ok = bool(np.all(sampled <= h) and np.all(h - sampled < 0.06))
    return _result("geometry", "union_support", ok, f"max gap {np.max(h - sampled):.3g}")


def _ball_volume(rng) -> CheckResult:
    vol = geometry.sample_region(Ball(center=(0, 0, 0), radius=1), 0.1).volume
    rel = abs(vol - 4.0 * math.pi / 3.0) / (4.0 * math.pi / 3.0)
    return _result("geometry", "ball_volume", rel < 0.02, f"relative error {rel:.3g}")


def _cone_limit(rng) -> CheckResult:
    cone = Cone(vertex=(0, 0, 0), axis=(0, 0, 1), height=60.0, opening=math.pi / 2)
    value = geometry.cone_integral(cone, 1.0)
    return _result("geometry", "cone_half_space_limit", abs(value - 4 * math.pi) < 1e-9 * 4 * math.pi)


def _cone_monte_carlo(rng) -> CheckResult:
    cone = Cone(vertex=(0.2, -0.1, 0.3), axis=(0, 0, 1), height=1.0, opening=math.pi / 3)
    tau = 2.0
    half = cone.height * math.sin(cone.opening)
    lo = np.array(cone.vertex) + (-half, -half, 0.0)
    hi = np.array(cone.vertex) + (half, half, cone.height)
    pts = rng.uniform(lo, hi, size=(1_000_000, 3))
    inside = geometry.cone_contains(cone, pts)
    r = np.linalg.norm(pts - np.asarray(cone.vertex), axis=1)
    estimate = float(np.prod(hi - lo) * np.mean(np.where(inside, np.exp(-tau * r), 0.0)))
    exact = geometry.cone_integral(cone, tau)
    rel = abs(estimate - exact) / exact
    return _result("geometry", "cone_monte_carlo", rel < 0.01, f"relative error {rel:.3g}")


# optical


def _snell_brute(rng) -> CheckResult:
    x, y, gp, gm = random_pairs(rng, 50)
    worst_z = worst_res = 0.0
    for k in range(50):
        z = optical.snell_point(x[k], y[k], gp[k], gm[k])
        brute = optical.snell_point_brute(x[k], y[k], gp[k], gm[k])
        worst_z = max(worst_z, float(np.linalg.norm(z - brute)))
        worst_res = max(worst_res, optical.snell_residual(optical.optical_path(x[k], y[k], gp[k], gm[k])))
    ok = worst_z <= 1e-6 and worst_res <= 1e-10
    return _result("optical", "snell_vs_brute_force", ok, f"|dz| {worst_z:.2e}, residual {worst_res:.2e}")


def _tilde_identities(rng) -> CheckResult:
    x, y, gp, gm = random_pairs(rng, 200)
    hi, lo = np.maximum(gp, gm), np.minimum(gp, gm)
    checked = failures = 0
    for k in range(200):
        if hi[k] - lo[k] < 0.1:
            continue
        zp = x[k, :2] + rng.uniform(-4, 4, 2)
        crit = optical.critical_angle(hi[k], lo[k])
        rho = float(np.linalg.norm(zp - x[k, :2]))
        r_lo = math.hypot(rho, x[k, 2])
        exact = optical.l_path(x[k], y[k], zp, hi[k], lo[k])
        tilde = optical.tilde_l(x[k], y[k], zp, hi[k], lo[k])
        if abs(math.atan2(rho, abs(x[k, 2])) - crit.theta0) < 1e-6:
            continue
        checked += 1
        if rho < crit.a0 * r_lo:
            failures += tilde != exact
        else:
            decomposed = optical.tilde_l_decomposed(x[k], y[k], zp, hi[k], lo[k])
            failures += not (tilde < exact and abs(tilde - decomposed) <= 1e-12 * max(1.0, exact))
    return _result("optical", "tilde_l_identities", failures == 0, f"{failures} of {checked} failed")


def _min_tilde_l(rng) -> CheckResult:
    x, y, gp, gm = random_pairs(rng, 5)
    worst_v = worst_z = 0.0
    for k in range(5):
        g_plus, g_minus = max(gp[k], gm[k]) + 0.5, min(gp[k], gm[k])
        value, arg = optical.min_tilde_l(x[k], y[k], g_plus, g_minus)
        worst_v = max(worst_v, abs(value - optical.optical_distance(x[k], y[k], g_plus, g_minus)))
        worst_z = max(worst_z, float(np.linalg.norm(arg - optical.snell_point(x[k], y[k], g_plus, g_minus))))
    ok = worst_v <= 1e-8 and worst_z <= 1e-4
    return _result("optical", "min_tilde_l_is_optical_distance", ok, f"|dl| {worst_v:.2e}, |dz| {worst_z:.2e}")


def _hessian_fd(rng) -> CheckResult:
    x, y, gp, gm = random_pairs(rng, 10)
    worst = 0.0
    step = 1e-4
    for k in range(10):
        z = optical.snell_point(x[k], y[k], gp[k], gm[k])
        H = optical.hessian(x[k], y[k], z, gp[k], gm[k])
        fd = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                ei, ej = np.eye(2)[i] * step, np.eye(2)[j] * step
                f = lambda d: optical.l_path(x[k], y[k], z + d, gp[k], gm[k])  # noqa: E731
                fd[i, j] = (f(ei + ej) - f(ei - ej) - f(ej - ei) + f(-ei - ej)) / (4 * step * step)
        worst = max(worst, float(np.max(np.abs(fd - H)) / np.max(np.abs(H))))
    return _result("optical", "hessian_finite_differences", worst <= 1e-5, f"relative error {worst:.2e}")


def _coaxial_balls(rng) -> CheckResult:
    d, b = Ball(center=(0, 0, -3), radius=1), Ball(center=(0, 0, 2), radius=0.5)
    value, xs, ys = optical.min_optical_distance(d, b, 1.0, 4.0)
    expected = 2.0 / 2.0 + 1.5 / 1.0
    ok = abs(value - expected) < 1e-6 and np.linalg.norm(xs[:2]) < 1e-3 and np.linalg.norm(ys[:2]) < 1e-3
    return _result("optical", "coaxial_balls", ok, f"{value:.10g} vs {expected:.10g}")


# resolvent

_SOURCE_BALL = Ball(center=(0.0, 0.0, 2.0), radius=0.5)


def _ball_closed_form(rng) -> CheckResult:
    s = SourceSpec(region=_SOURCE_BALL)
    bquad = geometry.ball_quadrature(_SOURCE_BALL)
    targets = np.array([[0.0, 0.0, 0.0], [1.0, 0.5, 1.0], [0.0, 2.0, 3.0]])
    quad = resolvent.v_free(targets, 3.0, s, bquad).values
    exact = resolvent.v_free_ball(targets, 3.0, _SOURCE_BALL.center, _SOURCE_BALL.radius).values
    rel = float(np.max(np.abs(quad - exact) / exact))
    return _result("resolvent", "ball_closed_form", rel <= 1e-6, f"relative error {rel:.2e}")


def _gradient_fd(rng) -> CheckResult:
    s = SourceSpec(region=_SOURCE_BALL)
    bquad = geometry.sample_region(_SOURCE_BALL, 0.1)
    x = np.array([0.3, -0.2, 0.4])
    step = 1e-4
    grad = resolvent.v_free(x, 4.0, s, bquad).gradients[0]
    fd = np.array(
        [
            (resolvent.v_free(x + e, 4.0, s, bquad).values[0] - resolvent.v_free(x - e, 4.0, s, bquad).values[0])
            / (2 * step)
            for e in np.eye(3) * step
        ]
    )
    rel = float(np.linalg.norm(fd - grad) / np.linalg.norm(grad))
    return _result("resolvent", "gradient_finite_differences", rel <= 1e-5, f"relative error {rel:.2e}")


def _triple_integral(rng) -> CheckResult:
    d = Ball(center=(0, 0, 0), radius=1)
    s = SourceSpec(region=Ball(center=(0, 0, 3), radius=0.5))
    direct = resolvent.grad_norm_sq_free(d, s, 3.0, 0.2)
    triple = resolvent.grad_norm_sq_triple(d, s, 3.0, 0.2)
    rel = abs(direct - triple) / triple
    return _result("resolvent", "triple_integral", rel < 0.01, f"relative difference {rel:.2e}")


def _kernel_positivity(rng) -> CheckResult:
    s = SourceSpec(region=_SOURCE_BALL)
    bquad = geometry.sample_region(_SOURCE_BALL, 0.1)
    pts = np.column_stack([rng.uniform(-3, 3, 200), rng.uniform(-3, 3, 200), rng.uniform(-3, 1.3, 200)])
    values = resolvent.v_free(pts, 2.0, s, bquad).values
    return _result("resolvent", "kernel_positivity", bool(np.all(values > 0)))


# indicator


def _laplace_constant(rng) -> CheckResult:
    T, tau = 4.0, 2.0
    times = np.linspace(0.0, T, 40_001)
    nodes = geometry.QuadratureSet(nodes=np.zeros((1, 3)), weights=np.ones(1))
    trace = TraceSet(nodes=nodes, times=times, values=np.ones((times.size, 1)))
    w = indicator.laplace_transform_traces(trace, tau)[0]
    exact = (1.0 - math.exp(-tau * T)) / tau
    return _result("indicator", "laplace_constant_trace", abs(w - exact) < 1e-8, f"error {abs(w - exact):.2e}")


def _synthetic_series(taus, L, p, c) -> IndicatorSeries:
    values = [c * t**p * math.exp(-2.0 * L * t) for t in taus]
    return IndicatorSeries(taus=list(taus), values=values, T=2.0 * L + 1.0, variant="standard")


def _fit_recovery(rng) -> CheckResult:
    taus = np.geomspace(2.0, 16.0, 16)
    worst = 0.0
    for _ in range(20):
        L, p, c = rng.uniform(0.5, 4.0), rng.uniform(-7.0, 2.0), rng.uniform(0.1, 10.0)
        fit = indicator.extract_length(_synthetic_series(taus, L, p, c))
        worst = max(worst, abs(fit.L_hat - L))
    return _result("indicator", "fit_recovery", worst <= 1e-6, f"worst |dL| {worst:.2e}")


def _fit_noise(rng) -> CheckResult:
    taus = np.geomspace(2.0, 16.0, 16)
    worst = 0.0
    for _ in range(20):
        L, p, c = rng.uniform(0.5, 4.0), rng.uniform(-7.0, 2.0), rng.uniform(0.1, 10.0)
        fit = indicator.extract_length(indicator.perturb(_synthetic_series(taus, L, p, c), 0.01, rng))
        worst = max(worst, abs(fit.L_hat - L) / L)
    return _result("indicator", "fit_with_noise", worst <= 0.01, f"worst relative error {worst:.2e}")


def _sign_mislabel(rng) -> CheckResult:
    series = _synthetic_series(np.geomspace(2.0, 16.0, 8), 1.0, 0.0, -1.0)
    right = indicator.sign_check(series, "M_plus")
    wrong = indicator.sign_check(series, "M_minus")
    ok = right.passed and not wrong.passed and wrong.first_violation_tau == series.taus[0]
    return _result("indicator", "sign_law_and_mislabel", ok)


def _enclosure_soundness(rng) -> CheckResult:
    d = Ball(center=(0, 0, 0), radius=1)
    centers = indicator.probe_sphere((0, 0, 0), 3.0, 26)
    probes = indicator.exact_probe_results(d, centers, 0.5, Homogeneous())
    encl = indicator.enclosure(probes, Homogeneous())
    inside = encl.contains(geometry.sample_region(d, 0.05).nodes)
    return _result("indicator", "enclosure_soundness", bool(inside.all()), f"{inside.mean():.4%} inside")


# forward


def _small_setup() -> tuple[MediumField, SourceSpec]:
    m = MediumField(inclusion=InclusionSpec(region=Ball(center=(0, 0, 0), radius=0.3), gamma=2.0))
    s = SourceSpec(region=Ball(center=(0, 0, 0.8), radius=0.3))
    return m, s


def _energy_conservation(rng) -> CheckResult:
    m, s = _small_setup()
    g = forward.grid_for(m, s, 1.0, 0.1)
    trace = forward.simulate(m, s, g, energy_every=1)
    drift = float(np.max(np.abs(trace.energy - trace.energy[0])) / trace.energy[0])
    return _result("forward", "energy_conservation", drift < 5e-3, f"drift {drift:.2e}")


def _causality(rng) -> CheckResult:
    m = MediumField()
    h = 0.05
    s = SourceSpec(region=Ball(center=(0, 0, 0), radius=0.2), smoothing_width=0.1)
    receiver = np.array([[0.0, 0.0, 1.5]])
    # distance from the receiver to the support of the smoothed f
    d = float(geometry.dist_point_region(receiver, s.region)[0]) - s.support_margin
    g = forward.grid_for(m, s, 2.0, h)
    solver = forward.WaveSolver(m, s, g)
    sampler = TrilinearSampler(g.spatial(), receiver)
    bound = 1e-6 * float(np.max(np.abs(solver.f)))
    worst = 0.0
    while solver.time < d / medium.c_max(m) - 2 * h:
        worst = max(worst, abs(float(sampler(solver.u_curr)[0])))
        solver.step()
    return _result("forward", "quiet_before_arrival", worst <= bound, f"max |u| {worst:.2e}, bound {bound:.2e}")


SUITES: dict[str, list[Check]] = {
    "geometry": [
        _contains_examples,
        _ball_distances,
        _box_ball_brute,
        _union_support,
        _ball_volume,
        _cone_limit,
        _cone_monte_carlo,
    ],
    "optical": [_snell_brute, _tilde_identities, _min_tilde_l, _hessian_fd, _coaxial_balls],
    "resolvent": [_ball_closed_form, _gradient_fd, _triple_integral, _kernel_positivity],
    "indicator": [_laplace_constant, _fit_recovery, _fit_noise, _sign_mislabel, _enclosure_soundness],
    "forward": [_energy_conservation, _causality],
}


def suite_names() -> list[str]:
    return [*SUITES, "all"]


def run_suite(name: str, seed: int = 0) -> list[CheckResult]:
    if name == "all":
        checks = [c for suite in SUITES.values() for c in suite]
    elif name in SUITES:
        checks = SUITES[name]
    else:
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.UNKNOWN_SUITE,
            message=f"unknown suite {name!r}; choose from {', '.join(suite_names())}",
        )
    results = []
    for check in checks:
        rng = np.random.default_rng(seed)
        try:
            result = check(rng)
        except EnclosureError as exc:
            result = _result(name, check.__name__.lstrip("_"), False, f"{exc.code}: {exc.message}")
        logger.info("%s/%s: %s %s", result.suite, result.name, "ok" if result.passed else "FAIL", result.detail)
        results.append(result)
    return results
