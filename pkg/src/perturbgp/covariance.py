"""Stationary covariance families.

The Matérn correlation used throughout is parameterised by a correlation
length ``ell`` and a smoothness ``nu``::

    K(t) = 2^(1-nu) / Gamma(nu) * z^nu * K_nu(z),   z = 2 sqrt(nu) |t| / ell,

with ``K_nu`` the modified Bessel function of the second kind (see
:mod:`perturbgp.bessel`).  Derivatives in ``ell`` and in the lag are
analytic; derivatives in ``nu`` use Richardson-extrapolated central
differences.

Models implement :class:`CovarianceModel`; a model exposes only its *free*
parameters as the vector ``theta`` (the others are held fixed), which is
how the one-parameter studies (estimate ``ell`` with ``nu`` known, or the
converse) and the joint two-parameter study share one code path.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np

from .bessel import bessel_k_scaled, kv_scaled_pair

__all__ = [
    "ParamBox",
    "MaternParams",
    "LagDerivatives",
    "CovarianceModel",
    "MaternModel",
    "VarianceModel",
    "matern",
    "matern_dell",
    "matern_dnu",
    "matern_lag_derivs",
]

ZERO_LAG = 1e-8
# values below exp(-690) ~ 1e-300 are flushed to zero: subnormal entries
# would otherwise slow dense matrix products down by an order of magnitude
_LOG_UNDERFLOW = -690.0
_FLUSH = 1e-300


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned parameter box ``[lower, upper]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError("lower and upper must be non-empty and of equal length")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError(f"need lower < upper componentwise, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def p(self):
        return len(self.lower)

    @property
    def bounds(self):
        return list(zip(self.lower, self.upper))

    def contains(self, theta):
        theta = np.atleast_1d(theta)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def is_interior(self, theta):
        theta = np.atleast_1d(theta)
        return bool(np.all(theta > self.lower) and np.all(theta < self.upper))


@dataclass(frozen=True)
class MaternParams:
    """Matérn correlation length and smoothness."""

    ell: float
    nu: float

    def __post_init__(self):
        if not (self.ell > 0 and self.nu > 0):
            raise ValueError(f"Matérn parameters must be positive, got {self}")


class LagDerivatives(NamedTuple):
    """Lag derivatives of a one-dimensional stationary covariance.

    ``dt_theta`` and ``dtt_theta`` stack one array per free parameter.
    """

    dt: np.ndarray
    dtt: np.ndarray
    dt_theta: np.ndarray
    dtt_theta: np.ndarray


# --------------------------------------------------------------------------
# Matérn kernels on distances

def _log_norm(nu):
    return (1.0 - nu) * math.log(2.0) - math.lgamma(nu)


def _zpow_kv(power, order, z, log_norm):
    """``exp(log_norm) * z**power * K_order(z)`` for z > 0, underflow-safe."""
    out = np.zeros_like(z)
    # exp(-z) dominates every power of z here; skip arguments whose value
    # would underflow anyway
    est = log_norm + power * np.log(z) - z + 0.5 * np.log(math.pi / (2 * z))
    keep = est + order * order / np.maximum(z, 1.0) > _LOG_UNDERFLOW
    if keep.any():
        zk = z[keep]
        out[keep] = np.exp(log_norm + power * np.log(zk) - zk) * bessel_k_scaled(order, zk)
        out[np.abs(out) < _FLUSH] = 0.0
    return out


def _lag_mask(r):
    r = np.abs(np.asarray(r, dtype=float))
    return r, r >= ZERO_LAG


def _matern_values(ell, nu, r):
    r, nz = _lag_mask(r)
    out = np.ones_like(r)
    z = 2.0 * math.sqrt(nu) * r[nz] / ell
    out[nz] = _zpow_kv(nu, nu, z, _log_norm(nu))
    return out


def _matern_values_and_dell(ell, nu, r):
    """K and dK/d ell, sharing one Bessel pair evaluation when possible."""
    r, nz = _lag_mask(r)
    k = np.ones_like(r)
    dk = np.zeros_like(r)
    z = 2.0 * math.sqrt(nu) * r[nz] / ell
    ln = _log_norm(nu)
    if nu >= 0.5 and z.size:
        # dK/d ell = c z^(nu+1) K_{nu-1}(z) / ell; (K_{nu-1}, K_nu) come together
        kz = np.zeros_like(z)
        dkz = np.zeros_like(z)
        est = ln + (nu + 1.0) * np.log(z) - z + 0.5 * np.log(math.pi / (2 * z))
        keep = est + nu * nu / np.maximum(z, 1.0) > _LOG_UNDERFLOW
        if keep.any():
            zk = z[keep]
            km1, k0 = kv_scaled_pair(nu - 1.0, zk)
            base = np.exp(ln + nu * np.log(zk) - zk)
            kz[keep] = base * k0
            dkz[keep] = base * zk * km1 / ell
            kz[np.abs(kz) < _FLUSH] = 0.0
            dkz[np.abs(dkz) < _FLUSH] = 0.0
        k[nz] = kz
        dk[nz] = dkz
    elif z.size:
        k[nz] = _zpow_kv(nu, nu, z, ln)
        dk[nz] = _zpow_kv(nu + 1.0, nu - 1.0, z, ln) / ell
    return k, dk


def _richardson_dnu(fun, nu):
    """Richardson-extrapolated central difference of ``fun`` in ``nu``."""
    h = 1e-4 * max(1.0, nu)
    d1 = (fun(nu + h) - fun(nu - h)) / (2 * h)
    d2 = (fun(nu + h / 2) - fun(nu - h / 2)) / h
    return (4.0 * d2 - d1) / 3.0


def _phi_derivs(nu, z):
    """Derivatives in z of phi(z) = c z^nu K_nu(z): returns phi', phi'', phi'''."""
    ln = _log_norm(nu)
    d1 = -_zpow_kv(nu, nu - 1.0, z, ln)
    d2 = _zpow_kv(nu, nu - 2.0, z, ln) - _zpow_kv(nu - 1.0, nu - 1.0, z, ln)
    d3 = 3.0 * _zpow_kv(nu - 1.0, nu - 2.0, z, ln) - _zpow_kv(nu, nu - 3.0, z, ln)
    return d1, d2, d3


def _matern_lag_parts(ell, nu, t):
    """dK/dt, d2K/dt2, d2K/dt dell, d3K/dt2 dell for nonzero scalar lags."""
    t = np.asarray(t, dtype=float)
    a = 2.0 * math.sqrt(nu) / ell
    z = a * np.abs(t)
    sgn = np.sign(t)
    d1, d2, d3 = _phi_derivs(nu, z)
    dt = sgn * a * d1
    dtt = a * a * d2
    dt_dell = -sgn * (a / ell) * (d1 + z * d2)
    dtt_dell = -(a * a / ell) * (2.0 * d2 + z * d3)
    return dt, dtt, dt_dell, dtt_dell


def _as_params(params):
    if isinstance(params, MaternParams):
        return params
    ell, nu = params
    return MaternParams(float(ell), float(nu))


def _scalar_or_array(t, out):
    return float(out) if np.ndim(t) == 0 else out


def matern(params, t):
    """Matérn correlation at lag(s) ``t``.

    Parameters
    ----------
    params : MaternParams or (ell, nu)
    t : float or array_like
        Scalar lags; for points in R^d pass the Euclidean distance.

    Returns
    -------
    float or ndarray
        Correlation in (0, 1]; exactly 1 for ``|t| < 1e-8``.
    """
    p = _as_params(params)
    return _scalar_or_array(t, _matern_values(p.ell, p.nu, np.atleast_1d(t)).reshape(np.shape(t)))


def matern_dell(params, t):
    """Derivative of the Matérn correlation with respect to ``ell``."""
    p = _as_params(params)
    out = _matern_values_and_dell(p.ell, p.nu, np.atleast_1d(t))[1]
    return _scalar_or_array(t, out.reshape(np.shape(t)))


def matern_dnu(params, t):
    """Derivative of the Matérn correlation with respect to ``nu``.

    Richardson extrapolation of central differences with base step
    ``1e-4 * max(1, nu)``.
    """
    p = _as_params(params)
    r = np.atleast_1d(t)
    out = _richardson_dnu(lambda v: _matern_values(p.ell, v, r), p.nu)
    return _scalar_or_array(t, out.reshape(np.shape(t)))


def matern_lag_derivs(params, t):
    """Lag derivatives of the Matérn correlation in dimension one.

    Returns a dict with ``dt``, ``dtt`` and the mixed derivatives
    ``dt_dell``, ``dt_dnu``, ``dtt_dell``, ``dtt_dnu``.

    Raises
    ------
    ValueError
        If any lag is within 1e-8 of zero.
    """
    p = _as_params(params)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.abs(tt) < ZERO_LAG):
        raise ValueError("lag derivatives are only defined for t != 0")
    dt, dtt, dt_dell, dtt_dell = _matern_lag_parts(p.ell, p.nu, tt)
    dt_dnu = _richardson_dnu(lambda v: _matern_lag_parts(p.ell, v, tt)[0], p.nu)
    dtt_dnu = _richardson_dnu(lambda v: _matern_lag_parts(p.ell, v, tt)[1], p.nu)
    shape = np.shape(t)
    out = dict(dt=dt, dtt=dtt, dt_dell=dt_dell, dt_dnu=dt_dnu,
               dtt_dell=dtt_dell, dtt_dnu=dtt_dnu)
    return {k: _scalar_or_array(t, v.reshape(shape)) for k, v in out.items()}


# --------------------------------------------------------------------------
# Model interface

class CovarianceModel(ABC):
    """A stationary covariance family ``K_theta`` with parameter derivatives.

    Subclasses evaluate on arrays of distances ``r >= 0`` (isotropic
    families) and, for dimension one, provide signed-lag derivatives.
    """

    param_names: tuple = ()

    @property
    def n_params(self):
        return len(self.param_names)

    @abstractmethod
    def cov(self, theta, r):
        """Covariance values at distances ``r``."""

    @abstractmethod
    def cov_and_grad(self, theta, r):
        """Return ``(K, dK)`` with ``dK`` of shape ``(p,) + r.shape``."""

    def lag_derivs(self, theta, t):
        """Signed-lag derivatives in dimension one; see :class:`LagDerivatives`."""
        raise NotImplementedError(f"{type(self).__name__} has no lag derivatives")

    def is_correlation(self):
        """Whether ``K_theta(0) = 1`` for every theta."""
        return True


class MaternModel(CovarianceModel):
    """Matérn correlation with a chosen subset of ``(ell, nu)`` free.

    Parameters
    ----------
    free : sequence of {"ell", "nu"}
        Parameters exposed in ``theta``, in this order.
    ell, nu : float, optional
        Values of the parameters that are held fixed.

    Examples
    --------
    >>> m = MaternModel(free=("ell",), nu=2.5)
    >>> m.params([0.7])
    MaternParams(ell=0.7, nu=2.5)
    """

    def __init__(self, free=("ell", "nu"), ell=None, nu=None):
        free = tuple(free)
        if not free or any(f not in ("ell", "nu") for f in free) or len(set(free)) != len(free):
            raise ValueError(f"free must be a non-empty subset of ('ell', 'nu'), got {free}")
        self.param_names = free
        self.fixed = {"ell": ell, "nu": nu}
        for name in ("ell", "nu"):
            if name not in free and self.fixed[name] is None:
                raise ValueError(f"{name} is not free and needs a fixed value")

    def __repr__(self):
        fixed = {k: v for k, v in self.fixed.items() if k not in self.param_names}
        return f"MaternModel(free={self.param_names}, fixed={fixed})"

    def params(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        vals = dict(self.fixed)
        vals.update(zip(self.param_names, theta.tolist()))
        return MaternParams(vals["ell"], vals["nu"])

    def theta_of(self, params):
        """Free-parameter vector of a full :class:`MaternParams`."""
        params = _as_params(params)
        return np.array([getattr(params, name) for name in self.param_names])

    def cov(self, theta, r):
        p = self.params(theta)
        return _matern_values(p.ell, p.nu, r)

    def cov_and_grad(self, theta, r):
        p = self.params(theta)
        r = np.asarray(r, dtype=float)
        k, dell = _matern_values_and_dell(p.ell, p.nu, r)
        grads = []
        for name in self.param_names:
            if name == "ell":
                grads.append(dell)
            else:
                grads.append(_richardson_dnu(lambda v: _matern_values(p.ell, v, r), p.nu))
        return k, np.stack(grads)

    def lag_derivs(self, theta, t):
        p = self.params(theta)
        d = matern_lag_derivs(p, np.asarray(t, dtype=float))
        return LagDerivatives(
            dt=d["dt"], dtt=d["dtt"],
            dt_theta=np.stack([d["dt_d" + n] for n in self.param_names]),
            dtt_theta=np.stack([d["dtt_d" + n] for n in self.param_names]),
        )


class VarianceModel(CovarianceModel):
    """Pure-variance family ``sigma2 * K_base(t)`` with ``sigma2`` the only parameter.

    Test family: the parameter is a global variance, so cross-validation
    carries no information about it.
    """

    param_names = ("sigma2",)

    def __init__(self, base, base_theta):
        self.base = base
        self.base_theta = np.atleast_1d(np.asarray(base_theta, dtype=float))

    def __repr__(self):
        return f"VarianceModel(base={self.base!r}, base_theta={self.base_theta.tolist()})"

    def cov(self, theta, r):
        return float(np.atleast_1d(theta)[0]) * self.base.cov(self.base_theta, r)

    def cov_and_grad(self, theta, r):
        kb = self.base.cov(self.base_theta, r)
        return float(np.atleast_1d(theta)[0]) * kb, kb[np.newaxis]

    def lag_derivs(self, theta, t):
        s2 = float(np.atleast_1d(theta)[0])
        b = self.base.lag_derivs(self.base_theta, t)
        return LagDerivatives(dt=s2 * b.dt, dtt=s2 * b.dtt,
                              dt_theta=b.dt[np.newaxis], dtt_theta=b.dtt[np.newaxis])

    def is_correlation(self):
        return False
