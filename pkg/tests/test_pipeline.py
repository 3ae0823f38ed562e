import math

import numpy as np
import pytest

from conftest import tiny_experiment
from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.experiment import ExperimentConfig
from wave_enclosure.services import forward, pipeline


@pytest.fixture(scope="module")
def tiny_bundle():
    config = ExperimentConfig.model_validate(tiny_experiment())
    return config, pipeline.compute_series(config)


def test_build_grid_respects_explicit_box():
    config = ExperimentConfig.model_validate(
        tiny_experiment(grid={"h": 0.1, "T": 0.5, "origin": [-1.0, -1.0, -1.0], "extent": [2.0, 2.0, 2.5]})
    )
    grid = pipeline.build_grid(config)
    assert grid.origin == (-1.0, -1.0, -1.0)
    assert grid.shape == (20, 20, 25)
    assert grid.T == pytest.approx(0.5)


def test_build_grid_explicit_dt_is_checked_not_corrected(tiny_config):
    config = tiny_config.model_copy(update={"grid": tiny_config.grid.model_copy(update={"dt": 0.1})})
    grid = pipeline.build_grid(config)
    assert grid.dt == 0.1
    with pytest.raises(EnclosureError) as exc:
        forward.simulate(config.medium(), config.source, grid)
    assert exc.value.exit_code == ExitCode.STABILITY


def test_build_grid_rejects_dt_that_does_not_divide_t():
    config = ExperimentConfig.model_validate(tiny_experiment(grid={"h": 0.1, "T": 1.5, "dt": 0.04}))
    with pytest.raises(EnclosureError) as exc:
        pipeline.build_grid(config)
    assert exc.value.exit_code == ExitCode.INVALID_INPUT
    assert exc.value.code == ErrorCode.GRID_MISMATCH

    dividing = ExperimentConfig.model_validate(tiny_experiment(grid={"h": 0.1, "T": 1.5, "dt": 0.03}))
    grid = pipeline.build_grid(dividing)
    assert grid.steps == 50
    assert grid.dt == 0.03


def test_series_share_grid_and_hash(tiny_bundle):
    config, bundle = tiny_bundle
    taus = config.taus.values()
    assert bundle.standard.taus == taus
    assert bundle.tilde.taus == taus
    assert bundle.standard.config_hash == bundle.tilde.config_hash == config.digest()
    assert bundle.tag == "M_plus"
    assert len(bundle.gap_scaled) == len(taus)
    assert bundle.source_norm_sq == pytest.approx(bundle.nodes.volume)


def test_standard_differs_from_tilde_by_horizon_term(tiny_bundle):
    config, bundle = tiny_bundle
    T = bundle.standard.T
    for tau, std, til, gap in zip(bundle.standard.taus, bundle.standard.values, bundle.tilde.values, bundle.gap_scaled):
        horizon = math.exp(-tau * T) * gap
        assert abs((std - til) - horizon) <= 1e-13 * max(abs(std), abs(til))


def test_tilde_series_reflects_inclusion(tiny_bundle):
    _, bundle = tiny_bundle
    assert np.any(np.asarray(bundle.tilde.values) != 0.0)
    assert np.all(np.isfinite(bundle.tilde.values))


def test_analyse_fills_every_report(tiny_bundle):
    config, bundle = tiny_bundle
    run = pipeline.analyse(bundle, config)
    assert run.fit_series == "tilde"
    assert run.fit.n_points >= 3
    assert run.sign_standard is not None and run.sign_tilde is not None
    assert run.equivalence is not None
    assert run.horizon is not None
    assert run.config_hash == config.digest()


def test_tilde_only_run_skips_resolvent():
    config = ExperimentConfig.model_validate(tiny_experiment(variants="tilde"))
    bundle = pipeline.compute_series(config)
    assert bundle.standard is None and bundle.gap_scaled is None
    run = pipeline.analyse(bundle, config)
    assert run.equivalence is None and run.sign_standard is None


def test_continuum_resolvent_for_ball_source():
    data = tiny_experiment(resolvent="continuum", variants="standard", fit={"series": "standard", "min_points": 3})
    config = ExperimentConfig.model_validate(data)
    bundle = pipeline.compute_series(config)
    assert np.all(np.isfinite(bundle.standard.values))
    assert bundle.tilde is None


def test_overlapping_source_is_rejected():
    data = tiny_experiment(source={"region": {"kind": "ball", "center": [0.0, 0.0, 0.4], "radius": 0.25}})
    with pytest.raises(EnclosureError) as exc:
        pipeline.compute_series(ExperimentConfig.model_validate(data))
    assert exc.value.code == ErrorCode.VALIDATION_ERROR


def _survey(**layout) -> ExperimentConfig:
    probes = {"center": [0.0, 0.0, 0.0], "distance": 2.0, "radius": 0.3, "lengths": "exact", "boundary_points": 50}
    probes.update(layout)
    return ExperimentConfig.model_validate(tiny_experiment(probes=probes))


def test_exact_survey():
    outcome = pipeline.run_survey(_survey())
    assert len(outcome.probes) == 26
    assert all(p.L_hat == pytest.approx(2.0 - 0.3 - 0.3) for p in outcome.probes)
    assert outcome.boundary.shape == (50, 3)
    assert outcome.hausdorff_excess == pytest.approx(0.0, abs=1e-9)


def test_survey_needs_probes_and_inclusion():
    with pytest.raises(EnclosureError) as exc:
        pipeline.run_survey(ExperimentConfig.model_validate(tiny_experiment()))
    assert exc.value.code == ErrorCode.INVALID_CONFIG
    data = tiny_experiment(
        probes={"distance": 2.0, "radius": 0.3, "lengths": "exact"},
        inclusion=None,
    )
    with pytest.raises(EnclosureError) as exc:
        pipeline.run_survey(ExperimentConfig.model_validate(data))
    assert exc.value.code == ErrorCode.NO_INCLUSION


def test_layered_survey_drops_probes_below_interface(caplog):
    data = tiny_experiment(
        background={"kind": "two_layer", "gamma_plus": 1.0, "gamma_minus": 4.0},
        inclusion={"region": {"kind": "ball", "center": [0.0, 0.0, -1.5], "radius": 0.5}, "gamma": 8.0},
        source={"region": {"kind": "ball", "center": [0.0, 0.0, 1.0], "radius": 0.5}},
        probes={
            "center": [0.0, 0.0, -1.5],
            "distance": 2.5,
            "radius": 0.5,
            "lengths": "exact",
            "boundary_points": 20,
            "centers": [[0.0, 0.0, 1.0], [1.5, 0.0, 1.0], [0.0, 0.0, -4.5]],
        },
    )
    outcome = pipeline.run_survey(ExperimentConfig.model_validate(data))
    assert len(outcome.probes) == 2
    assert all(p.variant == "two_layer" for p in outcome.probes)
    assert "Dropping 1 probes" in caplog.text


def test_noise_is_drawn_from_the_seed(tiny_bundle):
    config, bundle = tiny_bundle
    assert pipeline.add_noise(bundle, config) is bundle

    def noisy(seed):
        return config.model_copy(update={"seed": seed, "fit": config.fit.model_copy(update={"noise": 0.02})})

    a = pipeline.add_noise(bundle, noisy(3))
    b = pipeline.add_noise(bundle, noisy(3))
    c = pipeline.add_noise(bundle, noisy(4))
    assert a.tilde.values == b.tilde.values
    assert a.standard.values == b.standard.values
    assert a.tilde.values != c.tilde.values
    assert a.tilde.values != bundle.tilde.values
    assert a.gap_scaled == bundle.gap_scaled
