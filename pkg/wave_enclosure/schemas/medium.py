from __future__ import annotations

from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from wave_enclosure.schemas.geometry import Region

MonotonicityTag = Literal["M_plus", "M_minus", "violation"]


class Homogeneous(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["homogeneous"] = "homogeneous"
    gamma0: float = 1.0

    @field_validator("gamma0")
    @classmethod
    def _unit_background(cls, value: float) -> float:
        if value != 1.0:
            raise ValueError("homogeneous background coefficient is fixed to 1")
        return value


class TwoLayer(BaseModel):
    """gamma_plus above the x3 = 0 interface, gamma_minus below (interface plane belongs below)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["two_layer"] = "two_layer"
    gamma_plus: float = Field(gt=0, allow_inf_nan=False)
    gamma_minus: float = Field(gt=0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _distinct_layers(self) -> TwoLayer:
        if self.gamma_plus == self.gamma_minus:
            raise ValueError("two-layer background needs gamma_plus != gamma_minus")
        return self


Background = Annotated[Union[Homogeneous, TwoLayer], Field(discriminator="kind")]


class InclusionSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    region: Region
    # diagonal of gamma_D; a scalar in config means a multiple of the identity
    gamma: tuple[float, float, float]

    @field_validator("gamma", mode="before")
    @classmethod
    def _expand_scalar(cls, value):
        if isinstance(value, (int, float)):
            return (float(value),) * 3
        return value


class MediumField(BaseModel):
    model_config = ConfigDict(frozen=True)

    background: Background = Field(default_factory=Homogeneous)
    inclusion: InclusionSpec | None = None

    def without_inclusion(self) -> MediumField:
        return MediumField(background=self.background, inclusion=None)
