import numpy as np
import pytest
from hypothesis import given, strategies as st

from perturbgp import (GpDataset, MaternModel, PerturbedDesign, build_cov_matrix, krig_predict, make_dataset,
                       sample_design, simulate_gp, virtual_loo)
from perturbgp.prediction import (estimation_impact_on_prediction, expected_pred_error,
                                  loo_mse_gap, pred_error_integrand, pred_error_sweep,
                                  quadrature_nodes)

TH0 = np.array([0.5, 2.5])


@pytest.fixture
def model():
    return MaternModel()


def test_quadrature_weights():
    t, w = quadrature_nodes(5, 4)
    assert w.sum() == pytest.approx(1.0)
    assert t.min() > 0 and t.max() < 5
    # exact for polynomials of degree 7 on each cell
    assert w @ t ** 3 == pytest.approx(5 ** 3 / 4, rel=1e-12)


@pytest.mark.parametrize("theta", [TH0, [0.8, 1.2]])
def test_zero_at_design_points(model, theta):
    des = sample_design(12, 1, 0.3, seed=1)
    e = pred_error_integrand(model, theta, TH0, des, des.points[:, 0])
    np.testing.assert_allclose(e, 0.0, atol=1e-8)


def test_true_parameter_is_kriging_variance(model):
    des = sample_design(12, 1, 0.3, seed=1)
    ds = make_dataset(model, TH0, des, seed=0)
    t = np.linspace(0.1, 11.9, 30)
    _, var = krig_predict(model, TH0, ds, t)
    np.testing.assert_allclose(pred_error_integrand(model, TH0, TH0, des, t), var, atol=1e-12)


@given(ell=st.floats(0.2, 2.0), nu=st.floats(0.5, 5.0), seed=st.integers(0, 1000))
def test_true_parameter_is_optimal(ell, nu, seed):
    m = MaternModel()
    des = sample_design(10, 1, 0.4, seed=seed)
    t = np.linspace(0, 10, 41)
    e0 = pred_error_integrand(m, TH0, TH0, des, t)
    e = pred_error_integrand(m, [ell, nu], TH0, des, t)
    assert np.all(e >= e0 - 1e-10)


def test_quadrature_converges(model):
    des = sample_design(20, 1, 0.45, seed=2)
    a = expected_pred_error(model, TH0, TH0, des, per_cell=8)
    b = expected_pred_error(model, TH0, TH0, des, per_cell=24)
    assert a == pytest.approx(b, rel=1e-3)


def test_integrand_matches_simulation(model):
    des = sample_design(8, 1, 0.3, seed=3)
    theta = [0.9, 1.5]
    t = np.array([2.3, 5.5])
    pts = np.concatenate([des.points[:, 0], t])
    full = PerturbedDesign(pts[:, None], np.zeros((pts.size, 1)), 0.0)
    Z = simulate_gp(build_cov_matrix(model, TH0, full), seed=1, size=40000)
    y, yt = Z[:, :8], Z[:, 8:]
    R = build_cov_matrix(model, theta, des)
    r = model.cov(theta, np.abs(des.points[:, 0][:, None] - t[None, :]))
    pred = y @ R.solve(r)
    mc = np.mean((pred - yt) ** 2, axis=0)
    np.testing.assert_allclose(pred_error_integrand(model, theta, TH0, des, t), mc, rtol=0.04)


def test_loo_gap_zero_and_positive(model):
    des = sample_design(25, 1, 0.3, seed=4)
    assert loo_mse_gap(model, TH0, TH0, des) == 0.0
    assert loo_mse_gap(model, [0.8, 1.5], TH0, des) > 0


def test_loo_gap_monte_carlo(model):
    des = sample_design(15, 1, 0.3, seed=5)
    theta = [0.8, 1.5]
    Y = simulate_gp(build_cov_matrix(model, TH0, des), seed=2, size=6000)
    diffs = []
    for y in Y:
        ds = GpDataset(des, y, model, TH0)
        diffs.append(np.mean(virtual_loo(model, theta, ds).error ** 2)
                     - np.mean(virtual_loo(model, TH0, ds).error ** 2))
    diffs = np.array(diffs)
    se = diffs.std(ddof=1) / np.sqrt(diffs.size)
    assert abs(diffs.mean() - loo_mse_gap(model, theta, TH0, des)) < 4 * se


def test_sweep_structure(model):
    rows = pred_error_sweep(model, TH0, [0.0, 0.3], n=20, replicates=3, seed=1)
    assert [r.replicates for r in rows] == [1, 3]
    assert rows[0].std_error == 0.0
    assert all(0 < r.E_value < 1 for r in rows)


def test_impact_with_true_parameter(model):
    des = sample_design(20, 1, 0.3, seed=6)
    res = estimation_impact_on_prediction(model, TH0, des, theta_hat=TH0)
    assert res.difference == 0.0
    assert res.E_true == pytest.approx(expected_pred_error(model, TH0, TH0, des), rel=1e-12)


def test_impact_estimated_not_better_on_average(model):
    des = sample_design(20, 1, 0.3, seed=7)
    res = estimation_impact_on_prediction(model, TH0, des, kind="ML",
                                          estimator_options={"n_starts": 2})
    assert res.difference >= 0


def test_trajectory_agrees_with_conditional(model):
    des = sample_design(8, 1, 0.3, seed=8)
    theta = np.array([0.9, 1.5])
    gaps = []
    for r in range(300):
        a = estimation_impact_on_prediction(model, TH0, des, replicate=r, theta_hat=theta,
                                            mode="trajectory", grid_per_cell=16)
        b = estimation_impact_on_prediction(model, TH0, des, replicate=r, theta_hat=theta,
                                            mode="conditional", per_cell=16)
        gaps.append(a.E_hat - b.E_hat)
    gaps = np.array(gaps)
    assert abs(gaps.mean()) < 4 * gaps.std(ddof=1) / np.sqrt(gaps.size) + 2e-3


def test_bad_mode(model):
    with pytest.raises(ValueError):
        estimation_impact_on_prediction(model, TH0, sample_design(5, 1, 0.1), theta_hat=TH0,
                                        mode="other")


def test_dimension_check(model):
    with pytest.raises(ValueError):
        pred_error_integrand(model, TH0, TH0, sample_design(4, 2, 0.1), [0.5])
