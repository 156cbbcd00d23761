"""Integrated Kriging prediction error on ``[0, n]`` in dimension one.

For a design ``x_1, ..., x_n`` and prediction parameter ``theta``, the
Kriging predictor at ``t`` is ``w_theta(t)' y`` with
``w_theta(t) = R_theta^-1 r_theta(t)``.  Under the true ``theta0`` its mean
squared error is::

    e(t) = K0(0) - 2 w' r0(t) + w' R0 w,

which reduces to the Kriging variance ``1 - r0' R0^-1 r0`` for
``theta = theta0``.  ``E_{eps,theta}`` is the average of ``e`` over
``[0, n]``, integrated with a Gauss-Legendre rule on every unit cell.
"""

from dataclasses import asdict, dataclass
import csv
import math

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist

from .estimators import estimate
from .gp_core import GpDataset, build_cov_matrix, simulate_gp
from .parallel import map_ordered
from .sampling import make_rng, sample_design

__all__ = [
    "PredictionErrorReport",
    "quadrature_nodes",
    "pred_error_integrand",
    "expected_pred_error",
    "loo_mse_gap",
    "ImpactResult",
    "estimation_impact_on_prediction",
    "pred_error_sweep",
    "write_rows",
]


def quadrature_nodes(n, per_cell=8, lower=0.0):
    """Gauss-Legendre nodes and weights on each unit cell of ``[lower, lower + n]``.

    Weights are normalised to sum to one (they average, not integrate).
    """
    x, w = np.polynomial.legendre.leggauss(per_cell)
    cells = lower + np.arange(n, dtype=float)
    nodes = (cells[:, None] + 0.5 * (x + 1.0)[None, :]).ravel()
    weights = np.tile(0.5 * w, n) / n
    return nodes, weights


def _cross(model, theta, points, t):
    return model.cov(theta, cdist(points, np.asarray(t, dtype=float).reshape(-1, 1)))


def _weights(model, theta, design, t, cov=None):
    if cov is None:
        cov = build_cov_matrix(model, theta, design)
    return cov.solve(_cross(model, theta, design.points, t))


def pred_error_integrand(model, theta, theta0, design, t, cov=None, cov0=None):
    """Mean squared prediction error ``e(t)`` under ``theta0`` of the ``theta`` predictor.

    Parameters
    ----------
    t : array_like
        Prediction locations (dimension one).
    cov, cov0 : CovMatrix, optional
        Factorised ``R_theta`` and ``R_theta0`` to reuse.
    """
    if design.d != 1:
        raise ValueError("prediction error is implemented for dimension one")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if cov0 is None:
        cov0 = build_cov_matrix(model, theta0, design)
    r0 = _cross(model, theta0, design.points, t)
    k0 = model.cov(theta0, np.zeros(1))[0]
    if np.array_equal(theta, theta0):
        h = cov0.half_solve(r0)
        e = k0 - np.einsum("ij,ij->j", h, h)
    else:
        w = _weights(model, theta, design, t, cov)
        Lw = cov0.chol.T @ w
        e = k0 - 2.0 * np.einsum("ij,ij->j", w, r0) + np.einsum("ij,ij->j", Lw, Lw)
    return np.maximum(e, 0.0)


def expected_pred_error(model, theta, theta0, design, per_cell=8):
    """Conditional mean of ``E_{eps,theta}`` given the design."""
    nodes, weights = quadrature_nodes(design.n, per_cell)
    return float(weights @ pred_error_integrand(model, theta, theta0, design, nodes))


def loo_mse_gap(model, theta, theta0, design):
    """Excess expected mean squared leave-one-out error of ``theta`` over ``theta0``.

    Exact: with ``A = R_theta^-1 diag(R_theta^-1)^-2 R_theta^-1`` the expected
    sum of squared errors is ``Tr(A R0)``.
    """
    if design.n < 2:
        raise ValueError("leave-one-out needs at least two observations")
    cov0 = build_cov_matrix(model, theta0, design)
    rinv0 = cov0.inverse()
    n = design.n
    # under theta0 the expected squared LOO errors are the LOO variances 1/(R0^-1)_ii
    base = float(np.sum(1.0 / np.diag(rinv0)))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.array_equal(theta, np.atleast_1d(np.asarray(theta0, dtype=float))):
        return 0.0
    rinv = build_cov_matrix(model, theta, design).inverse()
    E = rinv / np.diag(rinv)[:, None]          # rows are D^-1 R^-1
    total = float(np.sum((E @ cov0.matrix) * E))
    return (total - base) / n


@dataclass
class PredictionErrorReport:
    """Monte Carlo mean of ``E_{eps,theta}`` over design replicates."""

    epsilon: float
    theta: list
    theta0: list
    n: int
    E_value: float
    std_error: float
    replicates: int
    per_cell: int
    seed: int

    def to_dict(self):
        return asdict(self)


def pred_error_sweep(model, theta0, epsilons, n=100, replicates=20, seed=0, theta=None,
                     per_cell=8, n_jobs=1):
    """``E_{eps,theta}`` averaged over designs for each epsilon.

    At ``epsilon = 0`` the design is deterministic and one replicate is used.
    The same perturbation streams serve every epsilon.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    theta = theta0 if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    reports = []
    for eps in epsilons:
        reps = 1 if eps == 0 else int(replicates)
        designs = [sample_design(n, 1, eps, seed=seed, replicate=r) for r in range(reps)]
        vals = np.array(map_ordered(
            lambda des: expected_pred_error(model, theta, theta0, des, per_cell), designs, n_jobs))
        se = float(np.std(vals, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        reports.append(PredictionErrorReport(float(eps), theta.tolist(), theta0.tolist(), int(n),
                                             float(np.mean(vals)), se, reps, per_cell, int(seed)))
    return reports


@dataclass
class ImpactResult:
    """Integrated errors of the plug-in and the true-parameter predictors."""

    E_hat: float
    E_true: float
    theta_hat: np.ndarray
    converged: bool

    @property
    def difference(self):
        return self.E_hat - self.E_true


def estimation_impact_on_prediction(model, theta0, design, kind="ML", seed=0, replicate=0,
                                    mode="conditional", per_cell=8, grid_per_cell=32,
                                    estimator_options=None, theta_hat=None):
    """Paired integrated prediction errors with estimated and true parameters.

    Parameters
    ----------
    mode : {"conditional", "trajectory"}
        ``"conditional"`` integrates the exact conditional mean squared
        error given the observations, ``(Yhat_hat - Yhat_0)^2 + s0^2``, by
        Gauss-Legendre quadrature.  ``"trajectory"`` simulates the process
        on ``grid_per_cell`` points per unit cell conditionally on the
        observations and averages the squared errors of both predictors
        against the same trajectory.
    theta_hat : array_like, optional
        Use this value instead of running the estimator.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    cov0 = build_cov_matrix(model, theta0, design)
    y = simulate_gp(cov0, seed, replicate)
    converged = True
    if theta_hat is None:
        ds = GpDataset(design, y, model, theta0, (seed, replicate))
        res = estimate(model, ds, kind, **(estimator_options or {}))
        theta_hat, converged = res.theta_hat, res.converged
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    n = design.n
    if mode == "conditional":
        t, w = quadrature_nodes(n, per_cell)
    elif mode == "trajectory":
        t = (np.arange(n * grid_per_cell) + 0.5) / grid_per_cell
        w = np.full(t.size, 1.0 / t.size)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    r0 = _cross(model, theta0, design.points, t)
    pred0 = r0.T @ cov0.solve(y)
    if np.array_equal(theta_hat, theta0):
        pred = pred0
    else:
        pred = _cross(model, theta_hat, design.points, t).T @ build_cov_matrix(
            model, theta_hat, design).solve(y)
    if mode == "conditional":
        h = cov0.half_solve(r0)
        s0 = np.maximum(model.cov(theta0, np.zeros(1))[0] - np.einsum("ij,ij->j", h, h), 0.0)
        E_true = float(w @ s0)
        E_hat = float(w @ (s0 + (pred - pred0) ** 2))
    else:
        # conditional covariance of Y(t) given y; the dense grid makes it
        # numerically semi-definite, so draw through a clipped eigen-root
        h = cov0.half_solve(r0)
        C = model.cov(theta0, np.abs(t[:, None] - t[None, :])) - h.T @ h
        lam, V = eigh(C)
        z = make_rng(seed, replicate + (1 << 32)).standard_normal(t.size)
        Y = pred0 + V @ (np.sqrt(np.maximum(lam, 0.0)) * z)
        E_true = float(w @ (pred0 - Y) ** 2)
        E_hat = float(w @ (pred - Y) ** 2)
    return ImpactResult(E_hat, E_true, theta_hat, bool(converged))


def write_rows(rows, path):
    """Write ``PredictionErrorReport`` rows with the fixed column contract."""
    cols = ["epsilon", "ell0", "nu0", "n", "E_mean", "E_stderr", "replicates"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([r["epsilon"], r["ell0"], r["nu0"], r["n"], repr(r["E_mean"]),
                         repr(r["E_stderr"]), r["replicates"]])
