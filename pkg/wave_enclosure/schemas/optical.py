from pydantic import BaseModel, ConfigDict

from wave_enclosure.schemas.geometry import Point3


class OpticalPath(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: Point3
    y: Point3
    z_prime: tuple[float, float]
    theta_minus: float
    theta_plus: float
    l: float
    gamma_plus: float
    gamma_minus: float


class CriticalAngle(BaseModel):
    model_config = ConfigDict(frozen=True)

    a0: float
    theta0: float
