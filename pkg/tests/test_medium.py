import math

import numpy as np
import pytest

from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.geometry import Ball
from wave_enclosure.schemas.medium import InclusionSpec, MediumField, TwoLayer
from wave_enclosure.services import geometry, medium

LAYERS = TwoLayer(gamma_plus=1.0, gamma_minus=4.0)


def test_interface_belongs_to_lower_layer():
    values = medium.background_value(LAYERS, [1.0, 0.0, -1.0])
    assert values.tolist() == [1.0, 4.0, 4.0]


def test_sample_gamma_uses_inclusion_inside_d():
    m = MediumField(
        background=LAYERS,
        inclusion=InclusionSpec(region=Ball(center=(0, 0, -2), radius=0.5), gamma=(6.0, 7.0, 8.0)),
    )
    gamma = medium.sample_gamma(m, [[0, 0, -2], [0, 0, 2], [0, 0, -1]])
    assert gamma[0].tolist() == [6.0, 7.0, 8.0]
    assert gamma[1].tolist() == [1.0, 1.0, 1.0]
    assert gamma[2].tolist() == [4.0, 4.0, 4.0]
    assert np.array_equal(medium.gamma_at(m, (0, 0, -2)), np.diag([6.0, 7.0, 8.0]))


def test_c_max_covers_inclusion_and_layers():
    m = MediumField(background=LAYERS, inclusion=InclusionSpec(region=Ball(center=(0, 0, -2), radius=0.5), gamma=9.0))
    assert medium.c_max(m) == 3.0
    assert medium.c_max(MediumField(background=LAYERS)) == 2.0
    assert medium.c_max(MediumField()) == 1.0


@pytest.mark.parametrize(
    ("gamma", "tag"),
    [(2.0, "M_plus"), (0.5, "M_minus"), ((0.5, 2.0, 2.0), "violation")],
)
def test_monotonicity_tags(gamma, tag):
    m = MediumField(inclusion=InclusionSpec(region=Ball(center=(0, 0, 0), radius=1), gamma=gamma))
    assert medium.check_monotonicity(m) == tag


def test_layered_monotonicity_is_relative_to_lower_layer():
    inclusion = InclusionSpec(region=Ball(center=(0, 0, -2), radius=0.5), gamma=3.0)
    assert medium.check_monotonicity(MediumField(background=LAYERS, inclusion=inclusion)) == "M_minus"


def test_monotonicity_needs_inclusion():
    with pytest.raises(EnclosureError) as exc:
        medium.check_monotonicity(MediumField())
    assert exc.value.code == ErrorCode.NO_INCLUSION


def test_validate_collects_every_violation():
    m = MediumField(
        background=LAYERS,
        inclusion=InclusionSpec(region=Ball(center=(0, 0, 0.5), radius=1.0), gamma=2.0),
    )
    problems = medium.validate(m, Ball(center=(0, 0, 0.2), radius=0.5))
    assert "sets intersect: closures of B and D overlap" in problems
    assert "B not strictly above interface" in problems
    assert "D not strictly below interface" in problems


def test_validate_accepts_separated_layout():
    m = MediumField(
        background=LAYERS,
        inclusion=InclusionSpec(region=Ball(center=(0, 0, -1.5), radius=0.5), gamma=8.0),
    )
    assert medium.validate(m, Ball(center=(0, 0, 1), radius=0.5)) == []


def test_require_valid_raises_with_violations():
    m = MediumField(inclusion=InclusionSpec(region=Ball(center=(0, 0, 0), radius=1), gamma=2.0))
    with pytest.raises(EnclosureError) as exc:
        medium.require_valid(m, Ball(center=(0, 0, 1.5), radius=1))
    assert exc.value.exit_code == ExitCode.INVALID_INPUT
    assert exc.value.detail["violations"] == ["sets intersect: closures of B and D overlap"]


def test_is_homogeneous():
    assert medium.is_homogeneous(MediumField())
    assert not medium.is_homogeneous(MediumField(background=LAYERS))
    assert math.isclose(medium.local_background(MediumField(background=LAYERS)), 4.0)


@pytest.mark.parametrize(
    ("background", "gamma"),
    [
        (None, 2.0),
        (None, (1.5, 3.0, 1.2)),
        (None, (0.5, 0.9, 0.2)),
        (LAYERS, (5.0, 6.0, 4.5)),
        (LAYERS, 2.0),
        (LAYERS, (3.0, 5.0, 3.0)),
    ],
)
def test_monotonicity_tag_orders_gamma_at_sampled_points(background, gamma, rng):
    region = Ball(center=(0.2, -0.1, -1.5), radius=0.6)
    fields = {"inclusion": InclusionSpec(region=region, gamma=gamma)}
    if background is not None:
        fields["background"] = background
    m = MediumField(**fields)
    tag = medium.check_monotonicity(m)
    points = geometry.sample_region(region, 0.15).nodes
    vectors = rng.standard_normal((64, 3))
    forms = []
    for x in points:
        gap = medium.gamma_at(m, x) - medium.background_value(m.background, x[2]) * np.eye(3)
        forms.append(np.einsum("ki,ij,kj->k", vectors, gap, vectors))
    forms = np.concatenate(forms)
    if tag == "M_plus":
        assert np.all(forms > 0)
    elif tag == "M_minus":
        assert np.all(forms < 0)
    else:
        assert forms.min() < 0 < forms.max()
