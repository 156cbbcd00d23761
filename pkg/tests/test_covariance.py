import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perturbgp.covariance import (MaternModel, MaternParams, ParamBox, VarianceModel, matern,
                                  matern_dell, matern_dnu, matern_lag_derivs)

SQ2 = math.sqrt(2.0)


def richardson(fun, x, h):
    d1 = (fun(x + h) - fun(x - h)) / (2 * h)
    d2 = (fun(x + h / 2) - fun(x - h / 2)) / h
    return (4 * d2 - d1) / 3


def test_param_validation():
    with pytest.raises(ValueError):
        MaternParams(0.0, 1.0)
    with pytest.raises(ValueError):
        MaternParams(1.0, -1.0)
    with pytest.raises(ValueError):
        ParamBox((1.0,), (1.0,))
    box = ParamBox((0.1, 0.5), (3.0, 5.0))
    assert box.p == 2
    assert box.contains([1.0, 1.0]) and not box.contains([0.05, 1.0])
    assert not box.is_interior([0.1, 1.0])


def test_zero_lag():
    assert matern((0.7, 2.3), 0.0) == 1.0
    assert matern((0.7, 2.3), 1e-9) == 1.0
    assert matern_dell((0.7, 2.3), 0.0) == 0.0
    assert matern_dnu((0.7, 2.3), 0.0) == 0.0


def test_exponential_case():
    t = np.linspace(-6, 6, 100)
    np.testing.assert_allclose(matern((1.0, 0.5), t), np.exp(-SQ2 * np.abs(t)), rtol=1e-10,
                               atol=1e-300)
    ell = 0.37
    np.testing.assert_allclose(matern((ell, 0.5), t), np.exp(-SQ2 * np.abs(t) / ell),
                               rtol=1e-10, atol=1e-300)


def test_dell_exponential_case():
    # d/d ell exp(-sqrt(2) t / ell) at ell = 1, t = 1
    assert matern_dell((1.0, 0.5), 1.0) == pytest.approx(SQ2 * math.exp(-SQ2), rel=1e-12)


def test_dt_exponential_case():
    d = matern_lag_derivs((1.0, 0.5), 1.0)
    assert float(d["dt"]) == pytest.approx(-SQ2 * math.exp(-SQ2), rel=1e-12)
    assert float(d["dtt"]) == pytest.approx(2 * math.exp(-SQ2), rel=1e-12)


def test_printed_values():
    assert matern((0.73, 2.5), 1.0) == pytest.approx(0.15, abs=0.01)
    assert matern((0.7, 2.5), 1.0) == pytest.approx(0.13, abs=0.01)
    assert matern((0.5, 2.5), 1.0) == pytest.approx(0.037, abs=0.004)
    assert matern_dnu((0.73, 2.5), 1.0) == pytest.approx(-3.7e-5, rel=0.1)
    assert matern_dnu((0.7, 2.5), 1.0) == pytest.approx(-1.3e-3, rel=0.1)
    assert matern_dnu((0.5, 2.5), 1.0) == pytest.approx(-5e-3, rel=0.1)


@pytest.mark.parametrize("ell,nu,t", [(0.5, 5.0, 2.0), (1.3, 0.7, 0.4), (2.7, 1.0, 3.0),
                                      (0.3, 3.3, 0.8)])
def test_dell_finite_difference(ell, nu, t):
    fd = richardson(lambda e: matern((e, nu), t), ell, 1e-3 * ell)
    assert matern_dell((ell, nu), t) == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("ell,nu,t", [(0.5, 2.5, 1.0), (1.3, 0.7, 0.4), (2.0, 4.0, 3.0)])
def test_dnu_finite_difference(ell, nu, t):
    fd = richardson(lambda v: matern((ell, v), t), nu, 1e-3)
    assert matern_dnu((ell, nu), t) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("ell,nu,t", [(0.5, 2.5, 1.0), (1.0, 1.5, -0.7), (2.7, 1.0, 2.0),
                                      (0.8, 4.2, 1.5)])
def test_lag_derivatives_finite_difference(ell, nu, t):
    d = matern_lag_derivs((ell, nu), t)
    h = 1e-3
    np.testing.assert_allclose(d["dt"], richardson(lambda s: matern((ell, nu), s), t, h),
                               rtol=1e-6)
    np.testing.assert_allclose(
        d["dtt"], richardson(lambda s: float(matern_lag_derivs((ell, nu), s)["dt"]), t, h),
        rtol=1e-6)
    np.testing.assert_allclose(
        d["dt_dell"], richardson(lambda e: float(matern_lag_derivs((e, nu), t)["dt"]), ell, h),
        rtol=1e-6)
    np.testing.assert_allclose(
        d["dtt_dell"], richardson(lambda e: float(matern_lag_derivs((e, nu), t)["dtt"]), ell, h),
        rtol=1e-6)
    np.testing.assert_allclose(
        d["dt_dnu"], richardson(lambda v: float(matern_lag_derivs((ell, v), t)["dt"]), nu, h),
        rtol=1e-5)
    np.testing.assert_allclose(
        d["dtt_dnu"], richardson(lambda v: float(matern_lag_derivs((ell, v), t)["dtt"]), nu, h),
        rtol=1e-5)


def test_lag_derivative_parity():
    t = np.array([0.3, 1.0, 2.5])
    a = matern_lag_derivs((0.9, 1.7), t)
    b = matern_lag_derivs((0.9, 1.7), -t)
    for key in ("dt", "dt_dell", "dt_dnu"):
        np.testing.assert_allclose(b[key], -a[key], rtol=1e-14)
    for key in ("dtt", "dtt_dell", "dtt_dnu"):
        np.testing.assert_allclose(b[key], a[key], rtol=1e-14)


def test_lag_derivs_reject_zero():
    with pytest.raises(ValueError):
        matern_lag_derivs((1.0, 1.0), np.array([1.0, 0.0]))


@given(ell=st.floats(0.3, 3.0), nu=st.floats(0.5, 5.0))
def test_bounded_and_decreasing(ell, nu):
    t = np.geomspace(1e-3, 20, 60)
    k = matern((ell, nu), t)
    assert np.all(k <= 1.0) and np.all(k >= 0.0)
    assert np.all(np.diff(k) <= 0.0)
    assert np.all(k[t < 5 * ell] > 0.0)
    np.testing.assert_array_equal(matern((ell, nu), -t), k)


@pytest.mark.parametrize("ell,nu", [(0.3, 0.5), (1.0, 1.5), (3.0, 5.0), (2.7, 1.0)])
def test_exponential_decay_of_sequences(ell, nu):
    i = np.arange(1, 41, dtype=float)
    seqs = [matern((ell, nu), i), matern_dell((ell, nu), i)]
    seqs += [np.asarray(v) for v in matern_lag_derivs((ell, nu), i).values()]
    env = np.max(np.abs(seqs), axis=0)
    keep = env > 1e-290
    slope, icpt = np.polyfit(i[keep], np.log(env[keep]), 1)
    assert slope < 0
    assert np.all(np.log(env[keep]) <= icpt + slope * i[keep] + 6.0)


def test_model_interface():
    m = MaternModel(free=("nu",), ell=0.5)
    assert m.param_names == ("nu",) and m.n_params == 1
    r = np.array([0.0, 0.5, 1.0])
    k, dk = m.cov_and_grad([2.5], r)
    np.testing.assert_allclose(k, matern((0.5, 2.5), r))
    np.testing.assert_allclose(dk[0], matern_dnu((0.5, 2.5), r), rtol=1e-12)
    mj = MaternModel()
    k, dk = mj.cov_and_grad([0.5, 2.5], r)
    assert dk.shape == (2, 3)
    np.testing.assert_allclose(dk[0], matern_dell((0.5, 2.5), r), rtol=1e-12)
    with pytest.raises(ValueError):
        MaternModel(free=("ell",))
    with pytest.raises(ValueError):
        MaternModel(free=("sigma",), ell=1, nu=1)
    assert m.theta_of(MaternParams(0.5, 2.5)).tolist() == [2.5]


def test_variance_model():
    base = MaternModel(free=("ell",), nu=1.5)
    vm = VarianceModel(base, [1.0])
    r = np.array([0.0, 0.7])
    k, dk = vm.cov_and_grad([2.0], r)
    np.testing.assert_allclose(k, 2.0 * base.cov([1.0], r))
    np.testing.assert_allclose(dk[0], base.cov([1.0], r))
    assert not vm.is_correlation()
    ld = vm.lag_derivs([2.0], np.array([1.0]))
    np.testing.assert_allclose(ld.dt_theta[0], ld.dt / 2.0)
