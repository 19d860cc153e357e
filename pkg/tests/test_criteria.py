from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hadamard_lab.criteria import (
    FINITE,
    INCONCLUSIVE,
    INFINITE,
    analyze_ray,
    doyle_transience,
    dpi_certificate,
    flat_singularity_test,
    radial_dpi_check,
    radial_transience,
    sector_integral,
)
from hadamard_lab.errors import InnerDivergent, InvalidParameters
from hadamard_lab.surface import ConstantNegative, Exponential, Flat, LogLaw, PowerLaw, radial_model


def _g_hyp(alpha):
    """int_alpha^inf dr / sinh r."""
    return -math.log(math.tanh(alpha / 2.0))


def test_hyperbolic_milnor_value():
    v, _ = radial_transience(ConstantNegative(1.0))
    assert v.status == FINITE
    np.testing.assert_allclose(v.value, _g_hyp(1.0), rtol=1e-8)
    assert v.error_bound < 1e-6


def test_flat_is_recurrent():
    v, _ = radial_transience(Flat())
    assert v.status == INFINITE


@pytest.mark.parametrize("profile,status", [
    (PowerLaw(alpha=1.01, R=1.0), FINITE),
    (LogLaw(c=0.5, R=2.0), INFINITE),
    (LogLaw(c=2.0, R=2.0), FINITE),
    (LogLaw.from_epsilon(0.5), FINITE),
    (Exponential(C=1.0, lam=1.0), FINITE),
])
def test_radial_transience_table(profile, status):
    v, _ = radial_transience(profile)
    assert v.status == status, v.to_dict()


def test_verdict_serializes():
    v, _ = radial_transience(ConstantNegative(1.0))
    d = v.to_dict()
    assert d["status"] == FINITE and d["method"] == "fitted_tail"
    assert "tail" in d["details"]


def test_doyle_radial(hyperbolic, flat):
    assert doyle_transience(hyperbolic).status == FINITE
    v = doyle_transience(flat)
    assert v.status == INCONCLUSIVE
    assert v.reason == "recurrent"
    assert v.details["infinite_fraction"] == 1.0


def test_doyle_needs_rays(hyperbolic):
    with pytest.raises(InvalidParameters):
        doyle_transience(hyperbolic, theta_grid=[0.0, 1.0])


def test_sector_integral_closed_form(hyperbolic):
    np.testing.assert_allclose(sector_integral(hyperbolic, 0.0, 0.5, 3.0), _g_hyp(3.0),
                               rtol=1e-8)
    np.testing.assert_allclose(sector_integral(hyperbolic, 1.0, 0.25, log_alpha=math.log(2.0)),
                               0.5 * _g_hyp(2.0), rtol=1e-8)


def test_sector_integral_flat_diverges(flat):
    with pytest.raises(InnerDivergent):
        sector_integral(flat, 0.0, 0.5, 3.0)


@given(a1=st.floats(1.0, 30.0), f=st.floats(1.0, 4.0), b1=st.floats(0.05, 1.5),
       g=st.floats(1.0, 2.0), t1=st.floats(0.0, 6.3), t2=st.floats(0.0, 6.3))
def test_sector_integral_monotone_and_rotation_free(hyperbolic, a1, f, b1, g, t1, t2):
    base = sector_integral(hyperbolic, t1, b1, a1)
    assert sector_integral(hyperbolic, t1, b1, a1 * f) <= base
    assert sector_integral(hyperbolic, t1, min(b1 * g, 3.0), a1) >= base
    np.testing.assert_allclose(sector_integral(hyperbolic, t2, b1, a1), base, rtol=1e-12)


def test_sector_integral_composite_hyperbolic_sector(composite):
    # a sector well inside the hyperbolic part sees exactly sinh r
    th = 1.5 * math.pi
    np.testing.assert_allclose(sector_integral(composite, th, 0.1, 4.0), 0.2 * _g_hyp(4.0),
                               rtol=1e-6)


def test_dpi_hyperbolic_grid_point(hyperbolic):
    cert = dpi_certificate(hyperbolic, 0.0, 0.5, 0.01)
    assert cert.found
    rho_star = 2.0 * math.atanh(math.exp(-0.01))
    np.testing.assert_allclose(cert.rho, 2.0 ** 2.5, rtol=1e-12)
    assert rho_star <= cert.rho < rho_star * cert.grid_ratio
    assert cert.sector_integral_at_rho < 0.01


def test_dpi_flat_not_found(flat):
    cert = dpi_certificate(flat, 0.0, 0.5, 0.01)
    assert not cert.found
    assert cert.to_dict()["rho"] == "NotFound"
    assert "InnerDivergent" in cert.reason


def test_dpi_log_law_huge_radius():
    cert = dpi_certificate(radial_model(LogLaw(c=1.5, R=2.0)), 0.0, 0.5, 0.001)
    assert cert.found
    assert cert.rho is None          # beyond float range
    assert cert.log_rho > 700


def test_dpi_rejects_bad_epsilon(hyperbolic):
    with pytest.raises(InvalidParameters):
        dpi_certificate(hyperbolic, 0.0, 0.5, 0.0)


def test_radial_dpi_check():
    res = radial_dpi_check(ConstantNegative(1.0))
    assert res.solvable and res.verdict == "DPI solvable"
    np.testing.assert_allclose(res.certificate["comparison_bound"]["2.0"], _g_hyp(2.0),
                               rtol=1e-8)
    assert radial_dpi_check(Flat()).solvable is None


def test_flat_singularity_flat_model(flat):
    v = flat_singularity_test(flat, 1.0, 0.5, 2.0)
    assert v.status == INFINITE


def test_flat_singularity_rejects_beta(flat):
    with pytest.raises(InvalidParameters):
        flat_singularity_test(flat, 1.0, 4.0, 2.0)


def test_strip_rays(strip):
    # the axis ray is flat, a ray off the axis leaves the strip and turns hyperbolic
    assert analyze_ray(strip, math.pi / 2).status == INFINITE
    assert analyze_ray(strip, 0.0).status == FINITE
