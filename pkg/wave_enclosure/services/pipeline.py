"""
End-to-end runs: simulate, sweep the tau grid, fit, check signs; and multi-probe surveys.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from wave_enclosure.core.config import get_settings
from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.experiment import ExperimentConfig
from wave_enclosure.schemas.forward import GridSpec, HelmholtzSolveSpec, SourceSpec, cfl_limit
from wave_enclosure.schemas.geometry import Ball
from wave_enclosure.schemas.medium import Homogeneous, MediumField, MonotonicityTag, TwoLayer
from wave_enclosure.schemas.results import IndicatorSeries, ProbeResult, ProbeRun
from wave_enclosure.services import forward, geometry, indicator, medium as medium_service, resolvent
from wave_enclosure.services.forward import PairRun
from wave_enclosure.services.geometry import QuadratureSet
from wave_enclosure.services.grid import TrilinearSampler, source_values
from wave_enclosure.services.indicator import Enclosure

logger = logging.getLogger(__name__)


@dataclass
class SeriesBundle:
    config_hash: str
    standard: IndicatorSeries | None
    tilde: IndicatorSeries | None
    # exp(tau T) (I - I~) per tau; only known without cancellation for the discrete resolvent
    gap_scaled: list[float] | None
    source_norm_sq: float
    tag: MonotonicityTag | None
    pair: PairRun
    nodes: QuadratureSet


@dataclass
class SurveyOutcome:
    config_hash: str
    probes: list[ProbeResult]
    runs: list[ProbeRun]
    enclosure: Enclosure
    boundary: NDArray[np.float64]
    hausdorff_excess: float | None


def build_grid(config: ExperimentConfig) -> GridSpec:
    """Forward grid from the config: sized by causality padding unless the box is given explicitly."""
    m = config.medium()
    gc = config.grid
    if gc.origin is None:
        grid = forward.grid_for(m, config.source, gc.T, gc.h, gc.cfl_safety, gc.margin_cells)
    else:
        safety = get_settings().cfl_safety if gc.cfl_safety is None else gc.cfl_safety
        dt_max = cfl_limit(gc.h, medium_service.c_max(m), safety)
        steps = max(1, math.ceil(gc.T / dt_max - 1e-12))
        grid = GridSpec(origin=gc.origin, extent=gc.extent, h=gc.h, dt=gc.T / steps, steps=steps)
    if gc.dt is not None:
        steps = max(1, round(gc.T / gc.dt))
        if abs(steps * gc.dt - gc.T) > 1e-9 * gc.T:
            raise EnclosureError(
                exit_code=ExitCode.INVALID_INPUT,
                code=ErrorCode.GRID_MISMATCH,
                message=f"dt = {gc.dt!r} does not divide T = {gc.T!r}; {steps} steps end at {steps * gc.dt!r}",
                detail={"dt": gc.dt, "T": gc.T, "steps": steps},
            )
        grid = grid.model_copy(update={"dt": gc.dt, "steps": steps})
    return grid


def _discrete_gaps(
    pair: PairRun, s: SourceSpec, nodes: QuadratureSet, taus: list[float], config: ExperimentConfig
) -> list[float]:
    """exp(tau T) * int_B f (w0 - v) with v the stepper-consistent grid resolvent of the background."""
    sampler = TrilinearSampler(pair.grid.spatial(), nodes.nodes)
    gaps = []
    for tau in taus:
        tail, info = resolvent.tail_transform(
            pair.background_operator,
            pair.background_tail,
            pair.grid.dt,
            tau,
            config.solver.tolerance,
            config.solver.max_iterations,
        )
        gaps.append(-indicator.pair_with_source(sampler(tail), s, nodes))
        logger.info("tau=%.4g: horizon gap solved in %d CG iterations", tau, info.iterations)
    return gaps


def _continuum_background(
    m: MediumField, s: SourceSpec, nodes: QuadratureSet, tau: float, config: ExperimentConfig, h: float
) -> NDArray[np.float64]:
    if isinstance(m.background, Homogeneous) and isinstance(s.region, Ball):
        ball = s.region
        field = resolvent.v_free_ball(
            nodes.nodes, tau, ball.center, ball.radius, s.signed_amplitude, allow_inside=True
        )
        return field.values
    if isinstance(m.background, TwoLayer):
        gamma_max = max(m.background.gamma_plus, m.background.gamma_minus)
    else:
        gamma_max = 1.0
    rgrid = resolvent.grid_for_resolvent([s.region], nodes.nodes, config.taus.min, gamma_max, h)
    spec = HelmholtzSolveSpec(
        grid=rgrid, tolerance=config.solver.tolerance, max_iterations=config.solver.max_iterations
    )
    field, info = resolvent.v_grid(MediumField(background=m.background), s, tau, spec)
    logger.info("tau=%.4g: continuum resolvent in %d CG iterations", tau, info.iterations)
    return TrilinearSampler(rgrid, nodes.nodes)(field)


def compute_series(config: ExperimentConfig) -> SeriesBundle:
    """Simulate with and without the inclusion and assemble the indicator series on the tau grid."""
    m = config.medium()
    s = config.source
    medium_service.require_valid(m, s.region)
    digest = config.digest()
    grid = build_grid(config)
    nodes = geometry.sample_region(s.region, grid.h, anchor=grid.origin)
    pair = forward.simulate_pair(m, s, grid, nodes=nodes)

    taus = config.taus.values()
    T = grid.T
    tag = medium_service.check_monotonicity(m) if m.inclusion is not None else None
    f_nodes = source_values(s, nodes.nodes)
    f_norm_sq = float(np.sum(nodes.weights * f_nodes**2))

    tilde_values = [indicator.indicator_tilde(pair.trace, pair.background_trace, s, nodes, tau) for tau in taus]
    standard_values: list[float] | None = None
    gaps: list[float] | None = None
    if config.variants != "tilde":
        if config.resolvent == "discrete":
            gaps = _discrete_gaps(pair, s, nodes, taus, config)
            standard_values = [it + math.exp(-tau * T) * g for it, tau, g in zip(tilde_values, taus, gaps)]
        else:
            standard_values = []
            for tau in taus:
                w = indicator.laplace_transform_traces(pair.trace, tau)
                v = _continuum_background(m, s, nodes, tau, config, grid.h)
                standard_values.append(indicator.indicator(w, v, s, nodes, tau))

    def series(values: list[float], variant: str) -> IndicatorSeries:
        return IndicatorSeries(
            taus=taus, values=values, T=T, variant=variant, config_hash=digest, monotonicity=tag
        )

    return SeriesBundle(
        config_hash=digest,
        standard=series(standard_values, "standard") if standard_values is not None else None,
        tilde=series(tilde_values, "tilde") if config.variants != "standard" else None,
        gap_scaled=gaps,
        source_norm_sq=f_norm_sq,
        tag=tag,
        pair=pair,
        nodes=nodes,
    )


def analyse(bundle: SeriesBundle, config: ExperimentConfig) -> ProbeRun:
    """Fit the configured series, check both sign laws from the window start, and compare the variants."""
    fit_series = bundle.tilde if config.fit.series == "tilde" else bundle.standard
    fit = indicator.extract_length(fit_series, threshold=config.fit.threshold, min_points=config.fit.min_points)

    sign_standard = sign_tilde = equivalence = None
    if bundle.standard is not None:
        sign_standard = indicator.sign_check(bundle.standard, bundle.tag, fit.window[0])
    if bundle.tilde is not None:
        sign_tilde = indicator.sign_check(bundle.tilde, bundle.tag, fit.window[0])
    if bundle.standard is not None and bundle.tilde is not None:
        equivalence = indicator.equivalence_trend(
            bundle.standard, bundle.tilde, bundle.source_norm_sq, window=fit.window, scaled_gap=bundle.gap_scaled
        )
        if not equivalence.passed:
            logger.warning("tau e^{tau T} |I - I~| grows along the fit window (Kendall %.3f)", equivalence.kendall_tau)

    return ProbeRun(
        config_hash=bundle.config_hash,
        standard=bundle.standard,
        tilde=bundle.tilde,
        fit=fit,
        fit_series=config.fit.series,
        sign_standard=sign_standard,
        sign_tilde=sign_tilde,
        equivalence=equivalence,
        horizon=indicator.horizon_check(fit_series),
        horizon_gap_scaled=bundle.gap_scaled or [],
        source_norm_sq=bundle.source_norm_sq,
    )


def add_noise(bundle: SeriesBundle, config: ExperimentConfig) -> SeriesBundle:
    """Perturb both series with the configured measurement noise; the draw is fixed by the config seed."""
    level = config.fit.noise
    if level <= 0:
        return bundle
    rng = np.random.default_rng(config.seed)
    tilde = indicator.perturb(bundle.tilde, level, rng) if bundle.tilde is not None else None
    standard = indicator.perturb(bundle.standard, level, rng) if bundle.standard is not None else None
    logger.info("Indicator series perturbed by %.3g relative noise (seed %d)", level, config.seed)
    return replace(bundle, tilde=tilde, standard=standard)


def run_probe_pipeline(config: ExperimentConfig) -> ProbeRun:
    return analyse(add_noise(compute_series(config), config), config)


def probe_centers(config: ExperimentConfig) -> NDArray[np.float64]:
    layout = config.probes
    if layout.centers:
        centers = np.asarray(layout.centers, dtype=np.float64)
    else:
        centers = indicator.probe_sphere(layout.center, layout.distance, layout.count)
    if isinstance(config.background, TwoLayer):
        above = centers[:, 2] - layout.radius > 0
        if not above.all():
            logger.warning("Dropping %d probes that are not strictly above the interface", int((~above).sum()))
        centers = centers[above]
    if centers.shape[0] == 0:
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.VALIDATION_ERROR,
            message="no usable probe positions in the survey layout",
        )
    return centers


def run_survey(config: ExperimentConfig) -> SurveyOutcome:
    """Lengths for every probe ball, the enclosure they define and a boundary point cloud."""
    if config.probes is None:
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.INVALID_CONFIG,
            message="survey needs a probes section",
        )
    layout = config.probes
    variant = "two_layer" if isinstance(config.background, TwoLayer) else "homogeneous"
    centers = probe_centers(config)

    runs: list[ProbeRun] = []
    if layout.lengths == "exact":
        if config.inclusion is None:
            raise EnclosureError(
                exit_code=ExitCode.INVALID_INPUT,
                code=ErrorCode.NO_INCLUSION,
                message="exact probe lengths need an inclusion",
            )
        probes = indicator.exact_probe_results(config.inclusion.region, centers, layout.radius, config.background)
    else:
        probes = []
        for k, p in enumerate(centers):
            region = Ball(center=tuple(float(c) for c in p), radius=layout.radius)
            probe_config = config.model_copy(
                update={"source": config.source.model_copy(update={"region": region}), "seed": config.seed + k}
            )
            logger.info("Probe %d/%d at %s", k + 1, centers.shape[0], region.center)
            run = run_probe_pipeline(probe_config)
            runs.append(run)
            if run.fit.L_hat <= 0:
                logger.warning("Probe at %s fitted a non-positive length %.4g; skipped", region.center, run.fit.L_hat)
                continue
            probes.append(ProbeResult(p=region.center, r=layout.radius, L_hat=run.fit.L_hat, variant=variant))
        if not probes:
            raise EnclosureError(
                exit_code=ExitCode.NUMERICAL,
                code=ErrorCode.WINDOW_EMPTY,
                message="no probe produced a usable length",
            )

    encl = indicator.enclosure(probes, config.background)
    r_max = layout.distance + layout.radius
    boundary = encl.boundary_samples(layout.center, layout.boundary_points, r_max)
    excess = None
    if config.inclusion is not None:
        directions = centers - np.asarray(layout.center)
        excess = indicator.hausdorff_excess(encl, config.inclusion.region, layout.center, directions, r_max)
        logger.info("Enclosure excess over the inclusion along probe directions: %.4g", excess)
    return SurveyOutcome(
        config_hash=config.digest(),
        probes=probes,
        runs=runs,
        enclosure=encl,
        boundary=boundary,
        hausdorff_excess=excess,
    )
