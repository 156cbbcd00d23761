"""Maximum likelihood and leave-one-out cross-validation estimation.

Objectives (``R = R_theta``, ``n`` observations)::

    L(theta)  = (1/n) {log det R + y' R^-1 y}
    CV(theta) = (1/n) y' R^-1 diag(R^-1)^-2 R^-1 y

Both come with analytic gradients.  Minimisation is multistart L-BFGS-B
over a :class:`~perturbgp.covariance.ParamBox` from a deterministic Halton
set of starting points.
"""

from dataclasses import dataclass, field
import enum
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .covariance import ParamBox
from .gp_core import CholeskyError, build_cov_and_grad, build_cov_matrix

__all__ = [
    "Kind",
    "ObjectiveEval",
    "EstimateResult",
    "neg_log_likelihood",
    "cv_criterion",
    "cv_gradients",
    "cv_variance",
    "default_box",
    "start_points",
    "estimate",
]


class Kind(str, enum.Enum):
    ML = "ML"
    CV = "CV"


class ObjectiveEval(NamedTuple):
    value: float
    gradient: np.ndarray
    theta: np.ndarray
    kind: Kind


def _theta(theta):
    return np.atleast_1d(np.asarray(theta, dtype=float))


def neg_log_likelihood(model, theta, dataset):
    """Modified negative log-likelihood ``L(theta)`` and its gradient."""
    theta = _theta(theta)
    cov, dR = build_cov_and_grad(model, theta, dataset.design)
    n = dataset.n
    y = dataset.y
    alpha = cov.solve(y)
    value = (cov.logdet() + float(y @ alpha)) / n
    rinv = cov.inverse()
    grad = np.array([(np.sum(rinv * dRk) - alpha @ dRk @ alpha) / n for dRk in dR])
    return ObjectiveEval(value, grad, theta, Kind.ML)


def _cv_parts(cov, dR, Y):
    """CV values and gradients for the columns of ``Y`` (shape (n, m))."""
    n = cov.n
    rinv = cov.inverse()
    dinv = np.diag(rinv)
    alpha = rinv @ Y
    err = alpha / dinv[:, None]
    values = np.sum(err * err, axis=0) / n
    grads = np.empty((dR.shape[0], Y.shape[1]))
    for k, dRk in enumerate(dR):
        B = rinv @ dRk
        a = np.einsum("ij,ij->i", B, rinv)
        derr = (-(B @ alpha) + alpha * (a / dinv)[:, None]) / dinv[:, None]
        grads[k] = 2.0 * np.sum(err * derr, axis=0) / n
    return values, grads


def cv_criterion(model, theta, dataset):
    """Mean squared virtual leave-one-out error ``CV(theta)`` and its gradient."""
    if dataset.n < 2:
        raise ValueError("cross validation needs at least two observations")
    theta = _theta(theta)
    cov, dR = build_cov_and_grad(model, theta, dataset.design)
    values, grads = _cv_parts(cov, dR, dataset.y[:, None])
    return ObjectiveEval(float(values[0]), grads[:, 0], theta, Kind.CV)


def cv_gradients(model, theta, design, Y):
    """CV values and gradients for many observation vectors on one design.

    Parameters
    ----------
    Y : ndarray, shape (m, n)
        One observation vector per row.

    Returns
    -------
    values : ndarray, shape (m,)
    grads : ndarray, shape (m, p)
    """
    cov, dR = build_cov_and_grad(model, _theta(theta), design)
    values, grads = _cv_parts(cov, dR, np.asarray(Y, dtype=float).T)
    return values, grads.T


def cv_variance(model, theta, dataset):
    """Cross-validation variance estimate ``(1/n) sum_i e_i^2 / c_i^2``.

    ``e_i`` are the leave-one-out errors and ``c_i^2`` the leave-one-out
    Kriging variances at the correlation parameters ``theta``.
    """
    if dataset.n < 2:
        raise ValueError("cross validation needs at least two observations")
    cov = build_cov_matrix(model, _theta(theta), dataset.design)
    dinv = np.diag(cov.inverse())
    alpha = cov.solve(dataset.y)
    # e_i = alpha_i / dinv_i and c_i^2 = 1 / dinv_i
    return float(np.mean(alpha * alpha / dinv))


_OBJECTIVES = {Kind.ML: neg_log_likelihood, Kind.CV: cv_criterion}

_DEFAULT_BOUNDS = {"ell": (0.05, 10.0), "nu": (0.25, 10.0), "sigma2": (1e-3, 1e3)}


def default_box(model):
    """Default search box for the free parameters of ``model``."""
    lo, hi = zip(*(_DEFAULT_BOUNDS[name] for name in model.param_names))
    return ParamBox(lo, hi)


def start_points(box, n_starts=8, log_scale=True):
    """``n_starts`` Halton points mapped into ``box`` (deterministic).

    With ``log_scale`` the points are spread uniformly in ``log theta``.
    """
    # the unscrambled sequence starts at the origin (a box corner); skip it
    u = qmc.Halton(box.p, scramble=False).random(n_starts + 1)[1:]
    lo, hi = np.array(box.lower, dtype=float), np.array(box.upper, dtype=float)
    if log_scale:
        return np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))
    return lo + u * (hi - lo)


@dataclass
class EstimateResult:
    """Outcome of :func:`estimate`.

    Attributes
    ----------
    theta_hat : ndarray
    objective_at_opt : float
    n_restarts_used : int
        Number of starts actually run (fewer than requested when the
        evaluation budget ran out).
    converged : bool
        Whether the selected start met the convergence test.
    boundary_hit : bool
        Whether some coordinate of ``theta_hat`` is at a box edge.
    kind : Kind
    n_evaluations : int
    """

    theta_hat: np.ndarray
    objective_at_opt: float
    n_restarts_used: int
    converged: bool
    boundary_hit: bool
    kind: Kind
    n_evaluations: int = 0
    starts: list = field(default_factory=list, repr=False)


class _BudgetExceeded(Exception):
    pass


def estimate(model, dataset, kind="ML", box=None, budget=None, n_starts=8,
             starts=None, gtol=1e-7, maxiter=200, boundary_tol=1e-6, log_scale=True):
    """Minimise the ML or CV objective over ``box``.

    The search runs in ``log theta`` by default.  On the natural scale the
    first quasi-Newton step from a start on the steep side of the
    likelihood can jump across the box onto the flat white-noise region
    (``ell`` at its lower edge, ``R`` close to the identity), where the
    gradient vanishes and the search stops.

    Parameters
    ----------
    kind : {"ML", "CV"}
    box : ParamBox, optional
        Defaults to :func:`default_box`.
    budget : int, optional
        Maximum total number of objective evaluations over all starts.
    n_starts : int
        Number of Halton starting points (ignored if ``starts`` is given).
    starts : array_like, optional
        Explicit starting points, shape (k, p).
    gtol : float
        Projected-gradient sup-norm tolerance (in the search variable).
    maxiter : int
        Iterations per start.
    log_scale : bool
        Search in ``log theta`` (the box must be positive).

    Returns
    -------
    EstimateResult
        Failure to converge is reported in the result, never raised.
    """
    kind = Kind(kind)
    fun = _OBJECTIVES[kind]
    box = default_box(model) if box is None else box
    if box.p != model.n_params:
        raise ValueError(f"box has {box.p} parameters, model has {model.n_params}")
    lo, hi = np.array(box.lower, dtype=float), np.array(box.upper, dtype=float)
    if log_scale and not np.all(lo > 0):
        raise ValueError("log-scale search needs a positive box")
    if log_scale:
        to_theta, to_x = np.exp, np.log
    else:
        to_theta = to_x = np.asarray
    x0s = (start_points(box, n_starts, log_scale) if starts is None
           else np.atleast_2d(np.asarray(starts, dtype=float)))
    x_lo, x_hi = to_x(lo), to_x(hi)
    count = [0]

    def f(x):
        if budget is not None and count[0] >= budget:
            raise _BudgetExceeded
        count[0] += 1
        theta = np.clip(to_theta(x), lo, hi)
        try:
            ev = fun(model, theta, dataset)
        except CholeskyError:
            return np.inf, np.zeros_like(x)
        # chain rule for theta = exp(x)
        return ev.value, ev.gradient * theta if log_scale else ev.gradient

    runs = []
    attempted = 0
    for x0 in x0s:
        attempted += 1
        best = {"x": None, "f": np.inf}

        def tracked(x):
            v, g = f(x)
            if v < best["f"]:
                best["x"], best["f"] = np.array(x), v
            return v, g

        try:
            res = minimize(tracked, to_x(x0), jac=True, method="L-BFGS-B",
                           bounds=list(zip(x_lo, x_hi)),
                           options={"gtol": gtol, "ftol": 1e-12, "maxiter": maxiter})
            x, val, ok = res.x, float(res.fun), bool(res.success)
        except _BudgetExceeded:
            x, val, ok = best["x"], best["f"], False
        if x is not None:
            x = np.clip(to_theta(x), lo, hi)
        if x is not None and np.isfinite(val):
            runs.append((val, tuple(x), ok))
        if budget is not None and count[0] >= budget:
            break
    if not runs:
        return EstimateResult(np.full(box.p, np.nan), np.inf, attempted, False, False,
                              kind, count[0], runs)
    val, x, ok = min(runs, key=lambda r: (r[0], r[1]))
    theta_hat = np.array(x)
    width = hi - lo
    edge = np.any((theta_hat - lo <= boundary_tol * width) | (hi - theta_hat <= boundary_tol * width))
    return EstimateResult(theta_hat, val, attempted, ok, bool(edge), kind, count[0], runs)
