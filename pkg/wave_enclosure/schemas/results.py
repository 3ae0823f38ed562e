from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, Field, model_validator

from wave_enclosure.schemas.forward import GridSpec
from wave_enclosure.schemas.geometry import Point3
from wave_enclosure.schemas.medium import Background, MonotonicityTag

SeriesVariant = Literal["standard", "tilde", "grad_norm"]
BackgroundKind = Literal["homogeneous", "two_layer"]


class IndicatorSeries(BaseModel):
    taus: list[float]
    values: list[float]
    T: float
    variant: SeriesVariant
    config_hash: str = ""
    monotonicity: MonotonicityTag | None = None

    @model_validator(mode="after")
    def _check_grid(self) -> IndicatorSeries:
        if len(self.taus) != len(self.values):
            raise ValueError("taus and values must have the same length")
        if any(b <= a for a, b in zip(self.taus, self.taus[1:])):
            raise ValueError("taus must be strictly increasing")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("indicator values must be finite")
        return self


class SlopeFit(BaseModel):
    L_hat: float
    p_hat: float
    c_hat: float
    residual: float
    window: tuple[float, float]
    n_points: int
    scale: float = 2.0
    dropped_taus: list[float] = Field(default_factory=list)


class SignReport(BaseModel):
    passed: bool
    tag: MonotonicityTag | None
    expected_sign: int
    checked: int
    first_violation_tau: float | None = None
    note: str = ""


class HorizonReport(BaseModel):
    decreasing: bool
    taus: list[float]
    log_scaled: list[float]


class EquivalenceReport(BaseModel):
    taus: list[float]
    statistic: list[float]
    kendall_tau: float
    ratio_to_first: float
    passed: bool


class ProbeResult(BaseModel):
    p: Point3
    r: float = Field(gt=0)
    L_hat: float = Field(gt=0)
    variant: BackgroundKind


class ProbeRun(BaseModel):
    config_hash: str
    standard: IndicatorSeries | None
    tilde: IndicatorSeries | None
    fit: SlopeFit
    fit_series: Literal["standard", "tilde"]
    sign_standard: SignReport | None = None
    sign_tilde: SignReport | None = None
    equivalence: EquivalenceReport | None = None
    horizon: HorizonReport | None = None
    horizon_gap_scaled: list[float] = Field(default_factory=list)
    source_norm_sq: float


class CheckResult(BaseModel):
    suite: str
    name: str
    passed: bool
    detail: str = ""


class TraceMetadata(BaseModel):
    config_hash: str
    grid: GridSpec
    nodes: list[Point3]
    weights: list[float]
    energy: list[float] | None = None


class SurveyReport(BaseModel):
    config_hash: str
    background: Background
    probes: list[ProbeResult]
    boundary_points: int
    hausdorff_excess: float | None = None
