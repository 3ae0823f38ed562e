from __future__ import annotations

import math
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

Coord = Annotated[float, Field(allow_inf_nan=False)]
Point3 = tuple[Coord, Coord, Coord]


class Ball(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["ball"] = "ball"
    center: Point3
    radius: float = Field(gt=0, allow_inf_nan=False)


class Box(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["box"] = "box"
    min: Point3
    max: Point3

    @model_validator(mode="after")
    def _check_corners(self) -> Box:
        if not all(lo < hi for lo, hi in zip(self.min, self.max)):
            raise ValueError("box min must be below max in every component")
        return self


class RegionUnion(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["union"] = "union"
    parts: tuple[Region, ...] = Field(min_length=1)


Region = Annotated[Union[Ball, Box, RegionUnion], Field(discriminator="kind")]
RegionUnion.model_rebuild()


class Cone(BaseModel):
    model_config = ConfigDict(frozen=True)

    vertex: Point3
    axis: Point3
    height: float = Field(gt=0, allow_inf_nan=False)
    opening: float = Field(gt=0, le=math.pi / 2)

    @model_validator(mode="after")
    def _check_axis(self) -> Cone:
        norm = math.sqrt(sum(c * c for c in self.axis))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"cone axis must be a unit vector (|n| = {norm!r})")
        return self
