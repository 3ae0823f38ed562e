import pytest
from pydantic import ValidationError

from conftest import tiny_experiment
from wave_enclosure.core.config import Settings, get_settings
from wave_enclosure.core.hashing import canonical_json, config_hash, format_float
from wave_enclosure.schemas.experiment import ExperimentConfig, TauGrid


def test_settings_defaults():
    settings = Settings()
    assert settings.fit_residual_threshold == 0.05
    assert settings.numeric_floor == 1e-300
    assert settings.float_format == ".17g"


def test_settings_read_prefixed_environment(monkeypatch):
    monkeypatch.setenv("WAVE_ENCLOSURE_THREADS", "3")
    monkeypatch.setenv("WAVE_ENCLOSURE_FIT_RESIDUAL_THRESHOLD", "0.1")
    settings = Settings()
    assert settings.threads == 3
    assert settings.fit_residual_threshold == 0.1


def test_get_settings_is_cached():
    assert get_settings() is get_settings()


def test_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_format_float_round_trips():
    value = 0.1 + 0.2
    assert float(format_float(value)) == value


def test_digest_ignores_output_directory():
    a = ExperimentConfig.model_validate(tiny_experiment(output={"directory": "runs/a"}))
    b = ExperimentConfig.model_validate(tiny_experiment(output={"directory": "runs/b"}))
    c = ExperimentConfig.model_validate(tiny_experiment(seed=7))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_tau_grid_values():
    grid = TauGrid(min=2, max=16, count=4)
    assert grid.values() == pytest.approx([2, 4, 8, 16])
    linear = TauGrid(min=2, max=8, count=4, spacing="linear")
    assert linear.values() == pytest.approx([2, 4, 6, 8])


@pytest.mark.parametrize(
    "overrides",
    [
        {"taus": {"min": 5, "max": 3}},
        {"taus": {"min": 0.5, "max": 3}},
        {"grid": {"h": 0.1, "T": 1.0, "origin": [0, 0, 0]}},
        {"grid": {"h": 0.1, "T": 1.0, "cfl_safety": 1.5}},
        {"variants": "standard", "fit": {"series": "tilde"}},
        {"background": {"kind": "two_layer", "gamma_plus": 2.0, "gamma_minus": 2.0}},
        {"background": {"kind": "homogeneous", "gamma0": 3.0}},
    ],
)
def test_invalid_configs_are_rejected(overrides):
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(tiny_experiment(**overrides))


def test_scalar_inclusion_coefficient_expands():
    config = ExperimentConfig.model_validate(tiny_experiment())
    assert config.inclusion.gamma == (2.0, 2.0, 2.0)
