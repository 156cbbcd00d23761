"""Covariance matrices, exact simulation, Kriging and virtual leave-one-out.

Matrices are dense and factorised once by Cholesky.  No jitter is added
unless a nugget is requested explicitly: on a perturbed grid with
``eps < 1/2`` the correlation matrix is positive definite, and a failed
factorisation is reported as an error rather than patched.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.spatial.distance import cdist, pdist

from .sampling import make_rng

__all__ = [
    "CholeskyError",
    "CovMatrix",
    "GpDataset",
    "LooResult",
    "pairwise_cov",
    "build_cov_matrix",
    "build_cov_and_grad",
    "simulate_gp",
    "make_dataset",
    "krig_predict",
    "virtual_loo",
]


class CholeskyError(np.linalg.LinAlgError):
    """Cholesky factorisation failed; ``pivot`` is the 1-based failing column."""

    def __init__(self, pivot, n):
        self.pivot = int(pivot)
        self.n = int(n)
        super().__init__(
            f"matrix is not positive definite: Cholesky failed at pivot "
            f"{self.pivot} of {self.n}")


def _condensed_to_square(vals, diag, n):
    out = np.empty((n, n))
    iu = np.triu_indices(n, 1)
    out[iu] = vals
    out.T[iu] = vals
    out[np.diag_indices(n)] = diag
    return out


def _pdist(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[1] == 1:
        x = points[:, 0]
        iu = np.triu_indices(x.size, 1)
        return np.abs(x[iu[0]] - x[iu[1]])
    return pdist(points)


def pairwise_cov(model, theta, points, grad=False):
    """Covariance matrix of ``points`` (and its theta-gradient when ``grad``).

    The kernel is evaluated once per unordered pair.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    r = _pdist(points)
    zero = np.zeros(1)
    if not grad:
        k0 = model.cov(theta, zero)[0]
        return _condensed_to_square(model.cov(theta, r), k0, n)
    k, dk = model.cov_and_grad(theta, r)
    k0, dk0 = model.cov_and_grad(theta, zero)
    R = _condensed_to_square(k, k0[0], n)
    dR = np.stack([_condensed_to_square(dk[j], dk0[j, 0], n) for j in range(dk.shape[0])])
    return R, dR


class CovMatrix:
    """A symmetric positive definite matrix with its Cholesky factor.

    Parameters
    ----------
    matrix : ndarray, shape (n, n)
    nugget : float
        Added to the diagonal before factorising (0 by default).

    Raises
    ------
    CholeskyError
        If the factorisation fails.
    """

    def __init__(self, matrix, nugget=0.0):
        A = np.array(matrix, dtype=float)
        if nugget:
            A[np.diag_indices_from(A)] += nugget
        A.setflags(write=False)
        self.matrix = A
        self.nugget = float(nugget)
        c, info = lapack.dpotrf(A, lower=1, clean=1)
        if info > 0:
            raise CholeskyError(info, A.shape[0])
        if info < 0:
            raise ValueError(f"dpotrf: illegal argument {-info}")
        c.setflags(write=False)
        self.chol = c
        self._inv = None

    @property
    def n(self):
        return self.matrix.shape[0]

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def solve(self, b):
        return cho_solve((self.chol, True), b)

    def half_solve(self, b):
        """``L^{-1} b`` with ``L`` the lower Cholesky factor."""
        return solve_triangular(self.chol, b, lower=True)

    def inverse(self):
        """Full inverse, computed once and cached."""
        if self._inv is None:
            inv, info = lapack.dpotri(self.chol, lower=1)
            if info != 0:
                raise np.linalg.LinAlgError(f"dpotri failed with info={info}")
            il = np.tril_indices(self.n, -1)
            inv[il[1], il[0]] = inv[il]
            # subnormal entries only slow later products down
            inv[np.abs(inv) < 1e-300] = 0.0
            inv.setflags(write=False)
            self._inv = inv
        return self._inv

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.matrix)[0])


def build_cov_matrix(model, theta, design, nugget=0.0):
    """``R_theta`` for the points of ``design``, factorised."""
    return CovMatrix(pairwise_cov(model, theta, design.points), nugget=nugget)


def build_cov_and_grad(model, theta, design, nugget=0.0):
    """Factorised ``R_theta`` together with the stack of ``dR/dtheta_k``."""
    R, dR = pairwise_cov(model, theta, design.points, grad=True)
    return CovMatrix(R, nugget=nugget), dR


@dataclass(frozen=True)
class GpDataset:
    """A design with one observation vector drawn at ``theta0``."""

    design: object
    y: np.ndarray
    model: object
    theta0: np.ndarray
    seed: object = None

    @property
    def n(self):
        return self.y.shape[0]


def simulate_gp(cov, seed, replicate=0, size=None):
    """Draw ``y = L z`` with ``z`` standard normal from stream ``(seed, replicate)``.

    Returns shape ``(n,)``, or ``(size, n)`` when ``size`` is given.
    """
    rng = make_rng(seed, replicate)
    if size is None:
        return cov.chol @ rng.standard_normal(cov.n)
    z = rng.standard_normal((cov.n, size))
    return (cov.chol @ z).T


def make_dataset(model, theta0, design, seed, replicate=0):
    """Simulate one observation vector on ``design`` under ``theta0``."""
    cov = build_cov_matrix(model, theta0, design)
    y = simulate_gp(cov, seed, replicate)
    y.setflags(write=False)
    return GpDataset(design, y, model, np.atleast_1d(np.asarray(theta0, dtype=float)),
                     seed=(seed, replicate))


def _locations(t, d):
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return t.reshape(1, 1), True
    if t.ndim == 1:
        return (t[:, None] if d == 1 else t[None, :]), d != 1
    return t, False


def krig_predict(model, theta, dataset, t, cov=None):
    """Simple-Kriging mean and variance at location(s) ``t``.

    Parameters
    ----------
    t : float or array_like
        A scalar (d = 1), a vector of locations (d = 1) or one point
        (d > 1), or an ``(m, d)`` array.
    cov : CovMatrix, optional
        Pre-factorised ``R_theta`` to reuse.

    Returns
    -------
    mean, variance : float or ndarray
        Variances are clipped below at 0.
    """
    design = dataset.design
    locs, single = _locations(t, design.d)
    if cov is None:
        cov = build_cov_matrix(model, theta, design)
    dist = cdist(design.points, locs)
    r = model.cov(theta, dist)
    w = cov.half_solve(r)
    mean = w.T @ cov.half_solve(dataset.y)
    k0 = model.cov(theta, np.zeros(1))[0]
    var = np.maximum(k0 - np.einsum("ij,ij->j", w, w), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


class LooResult(NamedTuple):
    """Leave-one-out predictions from the virtual formulas."""

    mean: np.ndarray
    variance: np.ndarray
    error: np.ndarray


def virtual_loo(model, theta, dataset, cov=None):
    """Leave-one-out means, variances and errors from one inverse.

    ``error_i = (R^-1 y)_i / (R^-1)_ii`` and ``variance_i = 1 / (R^-1)_ii``.
    """
    if dataset.n < 2:
        raise ValueError("leave-one-out needs at least two observations")
    if cov is None:
        cov = build_cov_matrix(model, theta, dataset.design)
    dinv = np.diag(cov.inverse())
    alpha = cov.solve(dataset.y)
    err = alpha / dinv
    return LooResult(mean=dataset.y - err, variance=1.0 / dinv, error=err)
