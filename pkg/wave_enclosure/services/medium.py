from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.geometry import Region
from wave_enclosure.schemas.medium import Background, Homogeneous, MediumField, MonotonicityTag, TwoLayer
from wave_enclosure.services import geometry

logger = logging.getLogger(__name__)


def background_value(background: Background, x3: ArrayLike) -> NDArray[np.float64]:
    """Scalar background coefficient; the interface plane x3 = 0 belongs to the lower layer."""
    z = np.asarray(x3, dtype=np.float64)
    if isinstance(background, TwoLayer):
        return np.where(z > 0, background.gamma_plus, background.gamma_minus)
    return np.full(z.shape, 1.0)


def sample_gamma(m: MediumField, points: ArrayLike) -> NDArray[np.float64]:
    """Diagonal entries of gamma at each point, shape (N, 3)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    base = background_value(m.background, pts[:, 2])
    out = np.repeat(base[:, None], 3, axis=1)
    if m.inclusion is not None:
        inside = geometry.contains(m.inclusion.region, pts)
        out[inside] = np.asarray(m.inclusion.gamma)
    return out


def gamma_at(m: MediumField, x: ArrayLike) -> NDArray[np.float64]:
    return np.diag(sample_gamma(m, x)[0])


def c_max(m: MediumField) -> float:
    if isinstance(m.background, TwoLayer):
        top = max(m.background.gamma_plus, m.background.gamma_minus)
    else:
        top = 1.0
    if m.inclusion is not None:
        top = max(top, max(m.inclusion.gamma))
    return math.sqrt(top)


def local_background(m: MediumField) -> float:
    # inclusions sit below the interface in the layered setting
    if isinstance(m.background, TwoLayer):
        return m.background.gamma_minus
    return 1.0


def check_monotonicity(m: MediumField) -> MonotonicityTag:
    if m.inclusion is None:
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.NO_INCLUSION,
            message="monotonicity is only defined for a medium with an inclusion",
        )
    ref = local_background(m)
    if min(m.inclusion.gamma) > ref:
        return "M_plus"
    if max(m.inclusion.gamma) < ref:
        return "M_minus"
    return "violation"


def validate(m: MediumField, source_region: Region) -> list[str]:
    """Collect every placement violation; an empty list means the configuration is usable."""
    problems: list[str] = []
    layered = isinstance(m.background, TwoLayer)

    if layered and m.background.gamma_plus == m.background.gamma_minus:
        problems.append("layers must differ: gamma_plus == gamma_minus")
    if layered:
        b_lo, _ = geometry.bounding_box(source_region)
        if not b_lo[2] > 0:
            problems.append("B not strictly above interface")

    if m.inclusion is not None:
        region = m.inclusion.region
        try:
            geometry.dist_sets(region, source_region)
        except EnclosureError as exc:
            if exc.code != ErrorCode.OVERLAP:
                raise
            problems.append("sets intersect: closures of B and D overlap")
        if layered:
            _, d_hi = geometry.bounding_box(region)
            if not d_hi[2] < 0:
                problems.append("D not strictly below interface")
        if min(m.inclusion.gamma) <= 0:
            problems.append("inclusion coefficient not positive definite")

    for problem in problems:
        logger.debug("Validation: %s", problem)
    return problems


def require_valid(m: MediumField, source_region: Region) -> None:
    problems = validate(m, source_region)
    if problems:
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.VALIDATION_ERROR,
            message="; ".join(problems),
            detail={"violations": problems},
        )


def is_homogeneous(m: MediumField) -> bool:
    return isinstance(m.background, Homogeneous)
