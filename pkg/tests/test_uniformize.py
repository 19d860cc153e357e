from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hadamard_lab.brownian import EmpiricalHittingMeasure
from hadamard_lab.criteria import ConvergenceVerdict, radial_transience
from hadamard_lab.errors import InvalidParameters
from hadamard_lab.potential import green_for_profile
from hadamard_lab.surface import ConstantNegative, Exponential, Flat
from hadamard_lab.uniformize import (
    ATOM_REGIME,
    CONSISTENT,
    PREREQ_UNMET,
    DiskMap,
    boundary_correspondence_report,
    disk_radius,
    geodesic_image_length,
)


@pytest.fixture(scope="module")
def dmap():
    return DiskMap.from_profile(ConstantNegative(1.0))


def test_disk_radius_hyperbolic(dmap):
    r = np.array([0.01, 0.5, 1.0, 3.0, 10.0])
    np.testing.assert_allclose(disk_radius(dmap, r), np.tanh(r / 2), rtol=1e-9)


def test_disk_map_coerces_normalization():
    raw = green_for_profile(ConstantNegative(1.0))
    np.testing.assert_allclose(DiskMap(raw).rho(1.0), math.tanh(0.5), rtol=1e-9)


def test_to_disk_preserves_angle(dmap):
    z = dmap.to_disk(2.0, 1.2)
    np.testing.assert_allclose(np.angle(z), 1.2)
    np.testing.assert_allclose(abs(z), math.tanh(1.0), rtol=1e-9)
    assert dmap.ray_image_length() == 1.0


def test_disk_radius_rejects(dmap):
    with pytest.raises(InvalidParameters):
        disk_radius(dmap, 0.0)
    with pytest.raises(InvalidParameters):
        disk_radius("not a map", 1.0)


@given(r1=st.floats(1e-3, 30.0), f=st.floats(1.01, 3.0))
def test_disk_radius_increasing(dmap, r1, f):
    assert dmap.rho(r1) < dmap.rho(r1 * f) <= 1.0


def test_disk_csv(tmp_path, dmap):
    path = tmp_path / "rho.csv"
    dmap.to_csv(path, [1.0, 2.0])
    assert path.read_text().splitlines()[0] == "r,rho"


def test_geodesic_image_length():
    v = geodesic_image_length(ConstantNegative(1.0), Exponential(C=1.0, lam=1.0), theta0=0.3)
    assert v.is_finite
    assert v.details["theta0"] == 0.3


def _uniform_measure(n=2000):
    ang = np.sort(np.random.default_rng(1).uniform(0, 2 * math.pi, n))
    return EmpiricalHittingMeasure(ang, n, 0, 0, n)


def test_report_consistent(hyperbolic):
    t, _ = radial_transience(ConstantNegative(1.0))
    rep = boundary_correspondence_report(hyperbolic, _uniform_measure(), [], transience=t)
    assert rep["verdict"] == CONSISTENT
    assert rep["narrative"]["rotation_fix"]


def test_report_atoms(hyperbolic):
    atoms = [{"angle": 1.0, "mass": 0.1, "p_value": 1e-9}]
    rep = boundary_correspondence_report(hyperbolic, _uniform_measure(), atoms)
    assert rep["verdict"] == ATOM_REGIME
    assert rep["narrative"]["collapse"][0]["disk_angle"] == 1.0


def test_report_prerequisites(flat):
    t, _ = radial_transience(Flat())
    rep = boundary_correspondence_report(flat, None, [], transience=t)
    assert rep["verdict"] == PREREQ_UNMET
    rep = boundary_correspondence_report(flat, None, [],
                                         transience=ConvergenceVerdict("finite", value=1.0))
    assert rep["verdict"] == PREREQ_UNMET
