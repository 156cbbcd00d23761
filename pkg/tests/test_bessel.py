import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from perturbgp.bessel import bessel_k, bessel_k_scaled, kv_scaled_pair


def quad_k(nu, x):
    """K_nu(x) = int_0^inf exp(-x cosh u) cosh(nu u) du."""
    upper = math.acosh(max(1.0, 750.0 / x)) + 5.0
    val, _ = integrate.quad(lambda u: math.exp(-x * math.cosh(u)) * math.cosh(nu * u),
                            0.0, upper, epsabs=0, epsrel=1e-13, limit=400)
    return val


def test_half_order_closed_form():
    np.testing.assert_allclose(bessel_k(0.5, 1.0), math.sqrt(math.pi / 2) / math.e, rtol=1e-14)
    x = np.logspace(-4, 1.5, 50)
    np.testing.assert_allclose(bessel_k(0.5, x), np.sqrt(np.pi / (2 * x)) * np.exp(-x),
                               rtol=1e-13)


@pytest.mark.parametrize("nu,x", [(1.0, 1.0), (2.5, 3.0), (0.3, 0.1), (7.2, 12.0), (4.0, 2.0)])
def test_quadrature_oracle(nu, x):
    np.testing.assert_allclose(bessel_k(nu, x), quad_k(nu, x), rtol=1e-10)


def test_known_value():
    np.testing.assert_allclose(bessel_k(1.0, 1.0), 0.6019072301972346, rtol=1e-12)


def test_mpmath_grid():
    nus = [0.01, 0.25, 0.5, 0.99, 1.0, 1.5, 2.37, 5.0, 9.9, 10.0]
    xs = [1e-6, 1e-3, 0.1, 1.0, 1.99, 2.0, 2.01, 7.0, 25.0, 50.0]
    for nu in nus:
        got = bessel_k(nu, np.array(xs))
        ref = np.array([float(mpmath.besselk(nu, x)) for x in xs])
        np.testing.assert_allclose(got, ref, rtol=1e-12, err_msg=f"nu={nu}")


def test_scaled_large_argument():
    x = np.array([100.0, 1000.0, 5000.0])
    ref = np.array([float(mpmath.besselk(2.5, v) * mpmath.exp(v)) for v in x])
    np.testing.assert_allclose(bessel_k_scaled(2.5, x), ref, rtol=1e-13)


def test_pair_is_consecutive_orders():
    x = np.linspace(0.05, 30, 40)
    k0, k1 = kv_scaled_pair(1.3, x)
    np.testing.assert_allclose(k0, special.kve(1.3, x), rtol=1e-13)
    np.testing.assert_allclose(k1, special.kve(2.3, x), rtol=1e-13)


def test_negative_order_symmetry():
    x = np.linspace(0.1, 10, 20)
    np.testing.assert_allclose(bessel_k_scaled(-1.7, x), bessel_k_scaled(1.7, x), rtol=0)


@given(nu=st.floats(0.05, 9.0), x=st.floats(1e-3, 40.0))
def test_recurrence(nu, x):
    lhs = bessel_k(nu + 1, x)
    # order nu - 1 may be zero or negative; K_{-v} = K_v
    km1 = bessel_k_scaled(nu - 1, np.array([x]))[0] * math.exp(-x)
    rhs = km1 + 2 * nu / x * bessel_k(nu, x)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_domain_errors():
    with pytest.raises(ValueError):
        bessel_k(0.0, 1.0)
    with pytest.raises(ValueError):
        bessel_k(1.0, 0.0)
    with pytest.raises(ValueError):
        bessel_k(1.0, np.array([1.0, -2.0]))


def test_overflow_signalled():
    with pytest.raises(OverflowError):
        bessel_k(1.0, 1000.0)       # exp(-1000) underflows
    with pytest.raises(OverflowError):
        bessel_k(200.0, 1e-6)


def test_shape_preserved():
    assert isinstance(bessel_k(1.5, 2.0), float)
    assert bessel_k(1.5, np.ones((3, 4))).shape == (3, 4)
