from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from wave_enclosure.core.hashing import config_hash
from wave_enclosure.schemas.forward import SourceSpec
from wave_enclosure.schemas.geometry import Point3
from wave_enclosure.schemas.medium import Background, Homogeneous, InclusionSpec, MediumField


class GridConfig(BaseModel):
    h: float = Field(gt=0)
    T: float = Field(gt=0)
    cfl_safety: float | None = Field(default=None, gt=0, le=0.9)
    # explicit values are checked, never silently corrected
    dt: float | None = Field(default=None, gt=0)
    origin: Point3 | None = None
    extent: Point3 | None = None
    margin_cells: int = Field(default=2, ge=0)

    @model_validator(mode="after")
    def _box_pair(self) -> GridConfig:
        if (self.origin is None) != (self.extent is None):
            raise ValueError("grid origin and extent must be given together")
        return self


class TauGrid(BaseModel):
    min: float = Field(default=2.0, ge=1)
    max: float = 16.0
    count: int = Field(default=16, ge=2)
    spacing: Literal["log", "linear"] = "log"

    @model_validator(mode="after")
    def _ordered(self) -> TauGrid:
        if self.max <= self.min:
            raise ValueError("tau max must exceed tau min")
        return self

    def values(self) -> list[float]:
        if self.spacing == "log":
            grid = np.geomspace(self.min, self.max, self.count)
        else:
            grid = np.linspace(self.min, self.max, self.count)
        return [float(t) for t in grid]


class SolverConfig(BaseModel):
    tolerance: float = Field(default=1e-10, gt=0, le=1e-6)
    max_iterations: int = Field(default=20000, ge=1)


class FitConfig(BaseModel):
    series: Literal["standard", "tilde"] = "tilde"
    threshold: float | None = Field(default=None, gt=0)
    min_points: int | None = Field(default=None, ge=3)
    # relative multiplicative noise put on both series before fitting, drawn from the config seed
    noise: float = Field(default=0.0, ge=0, lt=1)


class ProbeLayout(BaseModel):
    center: Point3 = (0.0, 0.0, 0.0)
    distance: float = Field(gt=0)
    radius: float = Field(gt=0)
    count: int = Field(default=26, ge=1)
    lengths: Literal["estimated", "exact"] = "estimated"
    boundary_points: int = Field(default=1000, ge=1)
    # explicit centres override the sphere layout
    centers: list[Point3] | None = None


class OutputConfig(BaseModel):
    directory: str = "runs/default"


class ExperimentConfig(BaseModel):
    background: Background = Field(default_factory=Homogeneous)
    inclusion: InclusionSpec | None = None
    source: SourceSpec
    grid: GridConfig
    taus: TauGrid = Field(default_factory=TauGrid)
    variants: Literal["both", "standard", "tilde"] = "both"
    resolvent: Literal["discrete", "continuum"] = "discrete"
    solver: SolverConfig = Field(default_factory=SolverConfig)
    fit: FitConfig = Field(default_factory=FitConfig)
    probes: ProbeLayout | None = None
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0

    @model_validator(mode="after")
    def _fit_series_emitted(self) -> ExperimentConfig:
        if self.variants != "both" and self.fit.series != self.variants:
            raise ValueError(f"fit series {self.fit.series!r} is not among emitted variants {self.variants!r}")
        return self

    def medium(self) -> MediumField:
        return MediumField(background=self.background, inclusion=self.inclusion)

    def digest(self) -> str:
        return config_hash(self, exclude={"output"})
