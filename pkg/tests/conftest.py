import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from wave_enclosure.schemas.experiment import ExperimentConfig
from wave_enclosure.schemas.forward import SourceSpec
from wave_enclosure.schemas.geometry import Ball
from wave_enclosure.schemas.medium import InclusionSpec, MediumField

RUN_ACCEPTANCE = os.getenv("RUN_ACCEPTANCE") == "1"
CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def tiny_experiment(**overrides) -> dict:
    """Small homogeneous probe run: seconds on one core."""
    data = {
        "background": {"kind": "homogeneous"},
        "inclusion": {"region": {"kind": "ball", "center": [0.0, 0.0, 0.0], "radius": 0.3}, "gamma": 2.0},
        "source": {"region": {"kind": "ball", "center": [0.0, 0.0, 0.9], "radius": 0.25}},
        "grid": {"h": 0.1, "T": 1.5},
        "taus": {"min": 2.0, "max": 12.0, "count": 8},
        "fit": {"series": "tilde", "min_points": 3},
        "solver": {"tolerance": 1e-10},
    }
    data.update(overrides)
    return data


@pytest.fixture(scope="session")
def acceptance_enabled() -> bool:
    return RUN_ACCEPTANCE


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return ExperimentConfig.model_validate(tiny_experiment())


@pytest.fixture
def write_config(tmp_path):
    def _write(data: dict, name: str = "experiment.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def small_medium() -> MediumField:
    return MediumField(inclusion=InclusionSpec(region=Ball(center=(0, 0, 0), radius=0.3), gamma=2.0))


@pytest.fixture
def small_source() -> SourceSpec:
    return SourceSpec(region=Ball(center=(0, 0, 0.8), radius=0.25))
