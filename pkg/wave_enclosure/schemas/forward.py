from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from wave_enclosure.schemas.geometry import Point3, Region

# smoothed sources are cut to zero this many widths beyond B
SMOOTHING_TRUNCATE = 5.0

class SpatialGrid(BaseModel):
    """Cell-centred Cartesian grid; cell (i, j, k) has centre origin + (index + 1/2) * h."""

    model_config = ConfigDict(frozen=True)

    origin: Point3
    extent: Point3
    h: float = Field(gt=0, allow_inf_nan=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(max(1, int(round(e / self.h))) for e in self.extent)  # type: ignore[return-value]

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(o + n * self.h for o, n in zip(self.origin, self.shape))  # type: ignore[return-value]

    @property
    def cell_volume(self) -> float:
        return self.h**3


class GridSpec(SpatialGrid):
    dt: float = Field(gt=0, allow_inf_nan=False)
    steps: int = Field(ge=1)

    @property
    def T(self) -> float:
        return self.steps * self.dt

    def spatial(self) -> SpatialGrid:
        return SpatialGrid(origin=self.origin, extent=self.extent, h=self.h)


class SourceSpec(BaseModel):
    """Initial velocity f = sign * amplitude * 1_B.

    A positive smoothing_width, in length units, replaces 1_B by its convolution with a
    Gaussian of that standard deviation; the grid convergence order then no longer depends
    on how the lattice cuts the boundary of B.
    """

    model_config = ConfigDict(frozen=True)

    region: Region
    amplitude: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    sign: Literal[1, -1] = 1
    smoothing_width: float = Field(default=0.0, ge=0, allow_inf_nan=False)

    @property
    def signed_amplitude(self) -> float:
        return self.sign * self.amplitude

    @property
    def support_margin(self) -> float:
        """How far f reaches beyond B."""
        return SMOOTHING_TRUNCATE * self.smoothing_width

    def scaled(self, factor: float) -> SourceSpec:
        value = self.signed_amplitude * factor
        return self.model_copy(update={"amplitude": abs(value), "sign": 1 if value > 0 else -1})


class HelmholtzSolveSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid: SpatialGrid
    tolerance: float = Field(default=1e-8, gt=0, le=1e-6)
    max_iterations: int = Field(default=20000, ge=1)


class CflReport(BaseModel):
    ok: bool
    dt: float
    dt_max: float
    c_max: float
    suggested_dt: float | None = None


def padding_required(c_max: float, T: float) -> float:
    return c_max * T / 2.0


def cfl_limit(h: float, c_max: float, safety: float) -> float:
    return safety * h / (math.sqrt(3.0) * c_max)
