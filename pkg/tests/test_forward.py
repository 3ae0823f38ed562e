import math

import numpy as np
import pytest

from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.forward import GridSpec, SourceSpec, cfl_limit
from wave_enclosure.schemas.geometry import Ball, Box
from wave_enclosure.schemas.medium import MediumField
from wave_enclosure.services import forward, geometry, stencil
from wave_enclosure.services.forward import WaveSolver
from wave_enclosure.services.grid import FluxOperator, TrilinearSampler, cell_centers, smoothed_ball, source_field


def test_grid_for_meets_cfl_and_padding(small_medium, small_source):
    g = forward.grid_for(small_medium, small_source, 1.0, 0.1)
    assert g.steps * g.dt == pytest.approx(1.0, rel=1e-12)
    assert forward.cfl_check(g, small_medium).ok
    assert g.dt <= cfl_limit(0.1, math.sqrt(2.0), 0.9)
    forward.check_padding(g, small_medium, small_source, 1.0)
    assert all(abs(o / 0.1 - round(o / 0.1)) < 1e-9 for o in g.origin)


def test_cfl_violation_suggests_dt(small_medium, small_source):
    g = forward.grid_for(small_medium, small_source, 1.0, 0.1)
    bad = g.model_copy(update={"dt": 0.1, "steps": 10})
    with pytest.raises(EnclosureError) as exc:
        forward.simulate(small_medium, small_source, bad)
    assert exc.value.exit_code == ExitCode.STABILITY
    assert exc.value.code == ErrorCode.CFL_VIOLATION
    assert exc.value.detail["suggested_dt"] == pytest.approx(cfl_limit(0.1, math.sqrt(2.0), 0.9))


def test_padding_violation(small_medium, small_source):
    g = forward.grid_for(small_medium, small_source, 1.0, 0.1)
    longer = g.model_copy(update={"steps": 4 * g.steps})
    with pytest.raises(EnclosureError) as exc:
        forward.simulate(small_medium, small_source, longer)
    assert exc.value.code == ErrorCode.PADDING_VIOLATION
    assert exc.value.detail["required_padding"] > exc.value.detail["padding"]


def test_overlap_is_rejected_before_stepping(small_medium):
    source = SourceSpec(region=Ball(center=(0, 0, 0.4), radius=0.25))
    g = forward.grid_for(small_medium, source, 1.0, 0.1)
    with pytest.raises(EnclosureError) as exc:
        forward.simulate(small_medium, source, g)
    assert exc.value.code == ErrorCode.VALIDATION_ERROR


def test_initial_state_and_trace_shape(small_medium, small_source):
    g = forward.grid_for(small_medium, small_source, 0.5, 0.1)
    trace = forward.simulate(small_medium, small_source, g)
    assert trace.values.shape == (g.steps + 1, len(trace.nodes))
    assert np.all(trace.values[0] == 0.0)
    assert np.allclose(trace.values[1], g.dt * small_source.amplitude)
    assert trace.T == pytest.approx(0.5)


def test_energy_is_conserved(small_medium, small_source):
    g = forward.grid_for(small_medium, small_source, 1.0, 0.1)
    trace = forward.simulate(small_medium, small_source, g, energy_every=1)
    drift = np.max(np.abs(trace.energy - trace.energy[0])) / trace.energy[0]
    assert trace.energy[0] > 0
    assert drift < 1e-9


def test_results_do_not_depend_on_thread_count(small_medium, small_source):
    g = forward.grid_for(small_medium, small_source, 0.6, 0.1)
    default = stencil.set_thread_cap(0)
    try:
        many = forward.simulate(small_medium, small_source, g).values
        stencil.set_thread_cap(1)
        one = forward.simulate(small_medium, small_source, g).values
    finally:
        stencil.set_thread_cap(default)
    assert np.array_equal(many, one)


def test_pair_without_inclusion_matches_background(small_source):
    m = MediumField()
    g = forward.grid_for(m, small_source, 0.6, 0.1)
    pair = forward.simulate_pair(m, small_source, g)
    assert np.array_equal(pair.trace.values, pair.background_trace.values)
    assert pair.background_tail[0].shape == g.shape


def test_numerical_cone_keeps_distant_points_silent():
    m = MediumField()
    s = SourceSpec(region=Ball(center=(0, 0, 0), radius=0.3))
    g = forward.grid_for(m, s, 2.6, 0.05)
    solver = WaveSolver(m, s, g)
    at_receiver = TrilinearSampler(g.spatial(), np.array([[0.0, 0.0, 1.5]]))
    while solver.time < 0.6:
        assert at_receiver(solver.u_curr)[0] == 0.0
        solver.step()


def test_operator_is_symmetric(small_medium):
    g = forward.grid_for(small_medium, SourceSpec(region=Ball(center=(0, 0, 0.8), radius=0.25)), 0.3, 0.1)
    op = FluxOperator.from_medium(small_medium, g.spatial())
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    assert np.vdot(a, op.apply(b)) == pytest.approx(np.vdot(op.apply(a), b), rel=1e-10)


def test_explicit_grid_outside_nodes_is_a_domain_error(small_medium, small_source):
    g = GridSpec(origin=(-2, -2, -2), extent=(4, 4, 2.5), h=0.1, dt=0.02, steps=5)
    nodes = geometry.sample_region(Ball(center=(0, 0, 3), radius=0.2), 0.1)
    with pytest.raises(EnclosureError) as exc:
        TrilinearSampler(g.spatial(), nodes.nodes)
    assert exc.value.code == ErrorCode.DOMAIN


def test_smoothed_source_is_quiet_before_arrival():
    m = MediumField()
    h = 0.05
    s = SourceSpec(region=Ball(center=(0, 0, 0), radius=0.2), smoothing_width=0.1)
    receiver = np.array([[0.0, 0.0, 1.5]])
    d = geometry.dist_point_region(receiver, s.region)[0] - s.support_margin
    g = forward.grid_for(m, s, 2.0, h)
    solver = WaveSolver(m, s, g)
    at_receiver = TrilinearSampler(g.spatial(), receiver)
    bound = 1e-6 * np.max(np.abs(solver.f))
    assert d == pytest.approx(0.8)
    while solver.time < d - 2 * h:
        assert abs(at_receiver(solver.u_curr)[0]) <= bound
        solver.step()


def test_smoothed_source_refines_at_second_order():
    m = MediumField()
    s = SourceSpec(region=Ball(center=(0, 0, 0), radius=0.3), smoothing_width=0.15)
    # multiples of the coarsest h sit at the same spot between cell centres on every level
    receivers = geometry.QuadratureSet(
        nodes=np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.4], [0.2, -0.3, 0.1]]), weights=np.ones(3)
    )
    coarse = forward.grid_for(m, s, 0.8, 0.1)
    traces = []
    for k in (1, 2, 4):
        g = forward.grid_for(m, s, 0.8, 0.1 / k).model_copy(update={"dt": coarse.dt / k, "steps": coarse.steps * k})
        traces.append(forward.simulate(m, s, g, nodes=receivers).values[::k])
    e1 = np.max(np.abs(traces[0] - traces[1]))
    e2 = np.max(np.abs(traces[1] - traces[2]))
    assert e1 / e2 >= 3.5


def test_smoothed_ball_profile():
    radius, width = 0.3, 0.1
    a = radius / width
    centre = float(smoothed_ball(0.0, radius, width))
    # mass of a standard 3-D Gaussian inside the ball
    assert centre == pytest.approx(math.erf(a / math.sqrt(2)) - math.sqrt(2 / math.pi) * a * math.exp(-a * a / 2))
    # below one half on the sphere: the ball is convex
    assert 0.3 < smoothed_ball(radius, radius, width) < 0.5
    assert smoothed_ball(radius + 5 * width, radius, width) < 1e-6
    r = np.linspace(0.0, 1.0, 101)
    assert np.all(np.diff(smoothed_ball(r, radius, width)) <= 1e-12)


def test_smoothed_source_field_and_padding():
    m = MediumField()
    sharp = SourceSpec(region=Ball(center=(0, 0, 0), radius=0.3))
    smooth = sharp.model_copy(update={"smoothing_width": 0.1})
    g_sharp = forward.grid_for(m, sharp, 1.0, 0.1)
    g_smooth = forward.grid_for(m, smooth, 1.0, 0.1)
    forward.check_padding(g_smooth, m, smooth, 1.0)
    assert g_smooth.extent[0] > g_sharp.extent[0] + 0.75
    with pytest.raises(EnclosureError) as exc:
        forward.check_padding(g_sharp, m, smooth, 1.0)
    assert exc.value.code == ErrorCode.PADDING_VIOLATION

    f = source_field(smooth, g_smooth.spatial())
    r = np.linalg.norm(cell_centers(g_smooth.spatial()), axis=1).reshape(g_smooth.shape)
    assert np.all(f[r > 0.3 + smooth.support_margin] == 0.0)
    assert np.sum(f) * 0.1**3 == pytest.approx(4 / 3 * math.pi * 0.3**3, rel=0.02)


def test_smoothing_filters_non_ball_regions():
    m = MediumField()
    box = SourceSpec(region=Box(min=(-0.2, -0.2, -0.2), max=(0.2, 0.2, 0.2)), smoothing_width=0.1)
    g = forward.grid_for(m, box, 1.0, 0.05)
    f = source_field(box, g.spatial())
    assert np.sum(f) * 0.05**3 == pytest.approx(0.4**3, rel=1e-6)
    assert 0 < np.max(f) < 1.0
