import math

import numpy as np
import pytest

from wave_enclosure.core.error_codes import ErrorCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.forward import HelmholtzSolveSpec, SourceSpec
from wave_enclosure.schemas.geometry import Ball
from wave_enclosure.schemas.medium import MediumField, TwoLayer
from wave_enclosure.services import forward, geometry, resolvent
from wave_enclosure.services.forward import WaveSolver
from wave_enclosure.services.grid import TrilinearSampler

BALL = Ball(center=(0, 0, 2), radius=0.5)
SOURCE = SourceSpec(region=BALL, amplitude=1.5)


def test_quadrature_matches_closed_form():
    bquad = geometry.sample_region(BALL, 0.04)
    targets = np.array([[0, 0, 0], [1, 0.5, 1], [0, 2, 3]], dtype=float)
    field = resolvent.v_free(targets, 3.0, SOURCE, bquad)
    exact = resolvent.v_free_ball(targets, 3.0, BALL.center, BALL.radius, SOURCE.amplitude)
    assert np.allclose(field.values, exact.values, rtol=2e-2)
    err = np.linalg.norm(field.gradients - exact.gradients, axis=1)
    assert np.all(err <= 3e-2 * np.linalg.norm(exact.gradients, axis=1))


def test_closed_form_gradient_matches_finite_differences():
    x = np.array([0.3, -0.2, 0.4])
    tau, step = 2.5, 1e-5
    grad = resolvent.v_free_ball(x, tau, BALL.center, BALL.radius).gradients[0]
    for i in range(3):
        e = np.eye(3)[i] * step
        up = resolvent.v_free_ball(x + e, tau, BALL.center, BALL.radius).values[0]
        down = resolvent.v_free_ball(x - e, tau, BALL.center, BALL.radius).values[0]
        assert grad[i] == pytest.approx((up - down) / (2 * step), rel=1e-5)


def test_closed_form_is_continuous_at_the_ball_surface():
    tau = 4.0
    inner = np.array([[0, 0, 2 - 0.5 * (1 - 1e-9)]])
    outer = np.array([[0, 0, 2 - 0.5 * (1 + 1e-9)]])
    a = resolvent.v_free_ball(inner, tau, BALL.center, BALL.radius, allow_inside=True)
    b = resolvent.v_free_ball(outer, tau, BALL.center, BALL.radius)
    assert a.values[0] == pytest.approx(b.values[0], rel=1e-6)
    assert a.gradients[0] == pytest.approx(b.gradients[0], rel=1e-5)


def test_closed_form_centre_limit():
    tau = 3.0
    centre = resolvent.v_free_ball(np.array(BALL.center), tau, BALL.center, BALL.radius, allow_inside=True)
    a = tau * BALL.radius
    expected = 1 / tau**2 - (1 + a) * math.exp(-a) / tau**2
    assert centre.values[0] == pytest.approx(expected, rel=1e-9)
    assert np.allclose(centre.gradients[0], 0.0)


def test_free_resolvent_rejects_points_in_b():
    bquad = geometry.sample_region(BALL, 0.1)
    with pytest.raises(EnclosureError) as exc:
        resolvent.v_free(np.array([[0, 0, 2.1]]), 2.0, SOURCE, bquad)
    assert exc.value.code == ErrorCode.DOMAIN
    with pytest.raises(EnclosureError):
        resolvent.v_free_ball(np.array([[0, 0, 2.1]]), 2.0, BALL.center, BALL.radius)


def test_triple_integral_equals_gradient_norm():
    d = Ball(center=(0, 0, 0), radius=1.0)
    s = SourceSpec(region=Ball(center=(0, 0, 3), radius=0.5))
    direct = resolvent.grad_norm_sq_free(d, s, 2.0, 0.2)
    triple = resolvent.grad_norm_sq_triple(d, s, 2.0, 0.2)
    assert triple == pytest.approx(direct, rel=1e-10)


def test_gradient_norm_needs_disjoint_sets():
    with pytest.raises(EnclosureError) as exc:
        resolvent.grad_norm_sq_free(Ball(center=(0, 0, 1.8), radius=0.5), SOURCE, 2.0, 0.1)
    assert exc.value.code == ErrorCode.OVERLAP


def test_stepper_consistent_tau():
    assert resolvent.stepper_consistent_tau(3.0, 1e-6) == pytest.approx(3.0, rel=1e-10)
    assert resolvent.stepper_consistent_tau(3.0, 0.05) > 3.0


def test_grid_resolvent_approximates_closed_form():
    s = SourceSpec(region=Ball(center=(0, 0, 0), radius=0.5))
    tau = 5.0
    target = np.array([[0.0, 0.0, 1.2]])
    grid = resolvent.grid_for_resolvent([s.region], target, tau, 1.0, 0.1)
    spec = HelmholtzSolveSpec(grid=grid, tolerance=1e-8)
    field, info = resolvent.v_grid(MediumField(), s, tau, spec)
    assert info.residual <= 1e-8
    value = TrilinearSampler(grid, target)(field)[0]
    exact = resolvent.v_free_ball(target, tau, s.region.center, s.region.radius).values[0]
    assert value == pytest.approx(exact, rel=0.15)


def test_tail_transform_sums_the_leapfrog_continuation():
    m = MediumField()
    s = SourceSpec(region=Ball(center=(0, 0, 0), radius=0.2))
    g = forward.grid_for(m, s, 0.5, 0.1)
    tau = 8.0
    solver = WaveSolver(m, s, g)
    for _ in range(g.steps - 1):
        solver.step()
    a0 = solver.u_curr.copy()
    total = np.zeros(g.shape)
    a1 = None
    for k in range(400):
        total += math.exp(-tau * k * g.dt) * solver.u_curr
        solver.step()
        if k == 0:
            a1 = solver.u_curr.copy()
    expected = g.dt * total - 0.5 * g.dt * a0
    tail, _ = resolvent.tail_transform(solver.operator, (a0, a1), g.dt, tau, 1e-13, 20000)
    assert np.max(np.abs(tail - expected)) <= 1e-8 * np.max(np.abs(expected))


def test_layered_resolvent_checks_decay_padding():
    layers = TwoLayer(gamma_plus=1.0, gamma_minus=4.0)
    s = SourceSpec(region=Ball(center=(0, 0, 1), radius=0.3))
    target = np.array([[0, 0, -1.0]])
    small = resolvent.grid_for_resolvent([s.region], target, 20.0, 4.0, 0.1)
    spec = HelmholtzSolveSpec(grid=small)
    with pytest.raises(EnclosureError) as exc:
        resolvent.v_layered(target, 2.0, s, layers, spec)
    assert exc.value.code == ErrorCode.PADDING_VIOLATION
    with pytest.raises(EnclosureError) as exc:
        resolvent.v_layered(target, 0.5, s, layers, spec)
    assert exc.value.code == ErrorCode.DOMAIN


def test_phi0_asymptotic_log_slope_is_optical_distance():
    x, y = np.array([0.3, 0.0, -0.6]), np.array([0.0, 0.1, 0.7])
    a = resolvent.phi0_asymptotic(x, y, 6.0, 1.0, 4.0)
    b = resolvent.phi0_asymptotic(x, y, 7.0, 1.0, 4.0)
    assert a.log_value - b.log_value == pytest.approx(a.l, rel=1e-12)
    assert a.value > 0 and a.det_h > 0 and a.e0 > 0


def test_ball_mean_factor_limits():
    assert resolvent.ball_mean_factor(1e-6, 0.5) == pytest.approx(1.0)
    kappa, rho = 4.0, 0.5
    a = kappa * rho
    assert resolvent.ball_mean_factor(kappa, rho) == pytest.approx(3 * (a * math.cosh(a) - math.sinh(a)) / a**3)


def test_spherical_quadrature_matches_closed_form():
    bquad = geometry.ball_quadrature(BALL)
    assert bquad.volume == pytest.approx(4.0 / 3.0 * math.pi * BALL.radius**3, rel=1e-12)
    targets = np.array([[0, 0, 0], [1, 0.5, 1], [0, 2, 3], [0.2, -0.1, 2.9]], dtype=float)
    field = resolvent.v_free(targets, 3.0, SOURCE, bquad)
    exact = resolvent.v_free_ball(targets, 3.0, BALL.center, BALL.radius, SOURCE.amplitude)
    assert np.allclose(field.values, exact.values, rtol=1e-6, atol=0)
    err = np.linalg.norm(field.gradients - exact.gradients, axis=1)
    assert np.all(err <= 1e-6 * np.linalg.norm(exact.gradients, axis=1))


def test_free_gradient_norm_is_quadratic_in_the_source():
    d = Ball(center=(0, 0, 0), radius=0.4)
    once = resolvent.grad_norm_sq_free(d, SOURCE, 3.0, 0.1)
    twice = resolvent.grad_norm_sq_free(d, SOURCE.scaled(2.0), 3.0, 0.1)
    assert twice == pytest.approx(4.0 * once, rel=1e-12)


def _quarter_turns() -> list[np.ndarray]:
    quarter = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    return [np.linalg.matrix_power(quarter, k) for k in range(4)]


def test_layered_resolvent_is_symmetric_about_the_vertical_axis():
    layers = TwoLayer(gamma_plus=1.0, gamma_minus=4.0)
    s = SourceSpec(region=Ball(center=(0, 0, 0.5), radius=0.2))
    turns = _quarter_turns()
    p = np.array([0.4, 0.1, -0.6])
    points = np.array([r @ p for r in turns])
    d_regions = [Ball(center=tuple(r @ np.array([0.3, 0.1, -0.8])), radius=0.25) for r in turns]
    tau = 8.0
    grid = resolvent.grid_for_resolvent([s.region, *d_regions], points, tau, 4.0, 0.1)
    spec = HelmholtzSolveSpec(grid=grid, tolerance=1e-10)

    field = resolvent.v_layered(points, tau, s, layers, spec)
    assert np.allclose(field.values, field.values[0], rtol=1e-8, atol=0)
    scale = np.linalg.norm(field.gradients[0])
    for r, grad in zip(turns, field.gradients):
        assert np.linalg.norm(grad - r @ field.gradients[0]) <= 1e-7 * scale

    norms = [resolvent.grad_norm_sq_layered(d, s, tau, layers, spec) for d in d_regions[:2]]
    assert norms[1] == pytest.approx(norms[0], rel=1e-8)


def test_equal_layers_reduce_to_free_space():
    equal = TwoLayer.model_construct(gamma_plus=1.0, gamma_minus=1.0)
    s = SourceSpec(region=Ball(center=(0, 0, 0.5), radius=0.2))
    d = Ball(center=(0, 0, -0.5), radius=0.2)
    tau, h = 4.0, 0.035
    grid = resolvent.grid_for_resolvent([s.region, d], None, tau, 1.0, h)
    spec = HelmholtzSolveSpec(grid=grid, tolerance=1e-9)
    layered = resolvent.grad_norm_sq_layered(d, s, tau, equal, spec)
    free = resolvent.grad_norm_sq_free(d, s, tau, h, anchor=grid.origin)
    assert layered == pytest.approx(free, rel=0.03)


def test_layered_gradient_matches_centred_differences_of_values():
    layers = TwoLayer(gamma_plus=1.0, gamma_minus=4.0)
    s = SourceSpec(region=Ball(center=(0, 0, 0.5), radius=0.2))
    tau, h = 8.0, 0.1
    p = np.array([0.23, -0.17, -0.61])
    offsets = np.vstack([np.zeros(3), h * np.eye(3), -h * np.eye(3)])
    points = p + offsets
    grid = resolvent.grid_for_resolvent([s.region], points, tau, 4.0, h)
    field = resolvent.v_layered(points, tau, s, layers, HelmholtzSolveSpec(grid=grid, tolerance=1e-10))
    differences = (field.values[1:4] - field.values[4:7]) / (2.0 * h)
    gradient = field.gradients[0]
    assert np.linalg.norm(differences - gradient) <= 1e-3 * np.linalg.norm(gradient)
