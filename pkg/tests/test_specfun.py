import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrkin.specfun import (FRACTION_RADIUS, TAYLOR_RADIUS, cal_F, d_y_cal_F, erfcx_complex,
                             principal_sqrt, screened_bracket)

mpmath.mp.dps = 30


def reference(z):
    zz = mpmath.mpc(z.real, z.imag)
    return complex(mpmath.exp(zz * zz) * mpmath.erfc(zz))


def test_matches_arbitrary_precision_on_all_branches():
    rng = np.random.default_rng(7)
    radius = np.concatenate([rng.uniform(0, TAYLOR_RADIUS, 400),
                             rng.uniform(TAYLOR_RADIUS, FRACTION_RADIUS, 400),
                             rng.uniform(FRACTION_RADIUS, 60, 200)])
    angle = rng.uniform(-math.pi / 2, math.pi / 2, radius.size)
    z = radius * np.exp(1j * angle)
    got = erfcx_complex(z)
    ref = np.array([reference(v) for v in z])
    assert np.max(np.abs(got / ref - 1)) < 1e-13


@pytest.mark.parametrize("z", [TAYLOR_RADIUS, FRACTION_RADIUS, TAYLOR_RADIUS * 1j, FRACTION_RADIUS * np.exp(0.7j)])
def test_branch_boundaries_are_continuous(z):
    for side in (z * (1 - 1e-12), z, z * (1 + 1e-12)):
        assert abs(erfcx_complex(side) / reference(complex(side)) - 1) < 1e-13


@settings(max_examples=200, deadline=None)
@given(st.floats(-4, 4), st.floats(-6, 6))
def test_reflection_and_conjugation(a, b):
    z = complex(a, b)
    w = erfcx_complex(z)
    assert abs(erfcx_complex(z.conjugate()) - w.conjugate()) <= 1e-13 * max(1.0, abs(w))
    lhs = erfcx_complex(-z) + w
    rhs = 2 * np.exp(z * z)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_real_axis_agrees_with_scipy():
    from scipy.special import erfcx
    y = np.linspace(-5, 30, 701)
    assert np.allclose(erfcx_complex(y).real, erfcx(y), rtol=1e-13, atol=0)
    assert np.all(erfcx_complex(y).imag == 0)


def test_differential_equation():
    z = np.array([0.3 + 0.2j, 2.0 - 1.0j, 9.0 + 4.0j, 0.5 + 5.0j])
    h = 1e-5
    deriv = (erfcx_complex(z + h) - erfcx_complex(z - h)) / (2 * h)
    assert np.allclose(deriv, 2 * z * erfcx_complex(z) - 2 / math.sqrt(math.pi), rtol=1e-8)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        erfcx_complex(np.nan)
    with pytest.raises(ValueError):
        erfcx_complex(complex(1, np.inf))
    with pytest.raises(OverflowError):
        erfcx_complex(-30.0)


def test_scalar_in_scalar_out():
    assert np.ndim(erfcx_complex(0.5)) == 0
    assert erfcx_complex(0.0) == 1.0


def test_derivative_identity_of_cal_F():
    y = np.linspace(0.01, 12, 300)
    h = 1e-6
    fd = ((y + h) * cal_F(y + h) - (y - h) * cal_F(y - h)) / (2 * h)
    assert np.allclose(d_y_cal_F(y), fd, atol=1e-8)
    assert abs(d_y_cal_F(0.0)) < 1e-15
    assert abs(d_y_cal_F(200.0) - 1) < 1e-4


def test_screened_bracket_large_argument_decay():
    # (1 + 2z^2) erfcx(z) - 2z/sqrt(pi) ~ 1/(sqrt(pi) z^3)
    z = 400.0
    assert abs(screened_bracket(z).real * math.sqrt(math.pi) * z**3 - 1) < 1e-4


def test_principal_sqrt_branch():
    w = np.array([-1 + 0j, -1 - 1e-300j, 4, -4j])
    r = principal_sqrt(w)
    assert np.all(r.real >= 0)
    assert np.allclose(r * r, w)


def test_golden_values():
    # frozen from an arbitrary-precision quadrature of the erfc integral
    assert erfcx_complex(0.0) == 1.0
    assert erfcx_complex(1.0).real == pytest.approx(0.42758357615580700, rel=1e-14)
    assert cal_F(1.0).real == pytest.approx(1.0 - 0.42758357615580700, rel=1e-14)
    assert cal_F(0.0) == 0.0
    # leading asymptotic term against the three-term series
    lead = 1.0 / (math.sqrt(math.pi) * 10.0)
    assert erfcx_complex(10.0).real == pytest.approx(0.056141094984878361, rel=1e-5)
    assert erfcx_complex(10.0).real == pytest.approx(lead, rel=0.005)
    assert cal_F(50.0).real == pytest.approx(1.0, rel=0.012)
