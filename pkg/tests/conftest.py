from __future__ import annotations

import json
import math

import pytest
from hypothesis import HealthCheck, settings

from hadamard_lab.surface import ConstantNegative, Flat, build_model, radial_model

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

THIRD = math.pi / 3

COMPOSITE_SPEC = {
    "sectors": [
        {"theta_min": THIRD, "theta_max": 2 * THIRD, "profile": {"family": "flat"}},
        {"theta_min": 4 * THIRD, "theta_max": 5 * THIRD,
         "profile": {"family": "constant_negative", "a": 1.0}},
    ],
    "fill": "blend",
    "lower_bound": {"family": "constant_negative", "a": 1.0},
}

STRIP_SPEC = {
    "sectors": [{"theta_min": 0.0, "theta_max": 2 * math.pi,
                 "profile": {"family": "constant_negative", "a": 1.0}}],
    "flat_strip": {"theta_axis": math.pi / 2, "half_width": 1.0},
    "upper_bound": {"family": "flat"},
    "lower_bound": {"family": "constant_negative", "a": 1.0},
}


@pytest.fixture(scope="session")
def hyperbolic():
    return radial_model(ConstantNegative(1.0))


@pytest.fixture(scope="session")
def flat():
    return radial_model(Flat())


@pytest.fixture(scope="session")
def composite():
    return build_model(COMPOSITE_SPEC)


@pytest.fixture(scope="session")
def strip():
    return build_model(STRIP_SPEC)


def write_model(path, profile_dict=None, spec=None):
    if spec is None:
        spec = {"sectors": [{"theta_min": 0.0, "theta_max": 2 * math.pi,
                             "profile": profile_dict}]}
    path.write_text(json.dumps(spec))
    return str(path)
