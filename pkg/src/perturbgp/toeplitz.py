"""Closed forms on the regular one-dimensional grid (epsilon = 0, one parameter).

On ``{1, ..., n}`` the covariance matrices are Toeplitz, and normalised
traces of their products converge to mean values over ``[-pi, pi]`` of
products of symbols.  Write ``M(g)`` for the mean value of ``g`` and

* ``f``      for the transform of ``K(i)``,
* ``f_th``   for the transform of ``dK/dtheta(i)``,
* ``i f_t``  for the transform of ``dK/dt(i) 1{i != 0}``,
* ``i f_tth`` for the transform of ``d2K/dt dtheta(i) 1{i != 0}``,
* ``f_tt``   for the transform of ``d2K/dt2(i) 1{i != 0}``,
* ``f_ttth`` for the transform of ``d3K/dt2 dtheta(i) 1{i != 0}``,

all with the convention ``s^(w) = sum_n s_n exp(i n w)``.  Then, for
example, ``Sigma_ML = M(f_th^2 / f^2) / 2``.  Transforms are computed by
direct summation of the exponentially decaying sequences.  None of the
random-design machinery is used, so these values serve as an independent
check of the trace estimators.
"""

from dataclasses import dataclass, field
import json
import math
from typing import NamedTuple

import numpy as np

__all__ = [
    "SpectralSequences",
    "ClosedForms",
    "DecayFitError",
    "SpectralDegeneracyError",
    "build_spectra",
    "mean_value",
    "closed_form_sigmas",
    "closed_form_d2_sigma_ml",
    "closed_form_report",
]

TAIL_TOL = 1e-14
MIN_F = 1e-12


class DecayFitError(ValueError):
    """The covariance sequences do not show a usable exponential decay."""


class SpectralDegeneracyError(ValueError):
    """The spectral density is not bounded away from zero on the grid."""


@dataclass
class SpectralSequences:
    """Sampled transforms on the uniform grid ``-pi + 2 pi k / m``."""

    omega: np.ndarray
    f: np.ndarray
    f_theta: np.ndarray
    f_t: np.ndarray
    f_t_theta: np.ndarray
    f_tt: np.ndarray
    f_tt_theta: np.ndarray
    n_max: int
    tail_bound: float
    decay: tuple
    sequences: dict = field(repr=False, default_factory=dict)

    @property
    def m(self):
        return self.omega.size

    def to_dict(self, include_grid=False):
        out = {"m": self.m, "n_max": self.n_max, "tail_bound": self.tail_bound,
               "decay_C": self.decay[0], "decay_a": self.decay[1],
               "sequences": {k: v.tolist() for k, v in self.sequences.items()}}
        if include_grid:
            for name in ("omega", "f", "f_theta", "f_t", "f_t_theta", "f_tt", "f_tt_theta"):
                out[name] = getattr(self, name).tolist()
        return out


def _sequences(model, theta0, n):
    """The six sequences at lags ``0..n`` (odd ones stored for positive lags)."""
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if model.n_params != 1:
        raise ValueError("closed forms are available for one estimated parameter only")
    lags = np.arange(n + 1, dtype=float)
    k, dk = model.cov_and_grad(theta0, lags)
    ld = model.lag_derivs(theta0, lags[1:])
    zero = np.zeros(1)
    return {
        "K": k,
        "K_theta": dk[0],
        "K_t": np.concatenate([zero, ld.dt]),
        "K_t_theta": np.concatenate([zero, ld.dt_theta[0]]),
        "K_tt": np.concatenate([zero, ld.dtt]),
        "K_tt_theta": np.concatenate([zero, ld.dtt_theta[0]]),
    }


def _fit_decay(env, start):
    """Least-squares fit ``log env_i ~ log C - a i`` over ``i >= start``."""
    i = np.arange(env.size)
    keep = (i >= start) & (env > 1e-300)
    if keep.sum() < 4:
        keep = (i >= 1) & (env > 1e-300)
    if keep.sum() < 2:
        return None
    slope, intercept = np.polyfit(i[keep], np.log(env[keep]), 1)
    if not slope < 0:
        return None
    # shift the intercept so the line dominates every fitted point
    intercept += max(0.0, float(np.max(np.log(env[keep]) - (intercept + slope * i[keep]))))
    return math.exp(intercept), -slope


def _choose_n_max(model, theta0, tol=TAIL_TOL, start=64, limit=1 << 15):
    n = start
    while n <= limit:
        seq = _sequences(model, theta0, n)
        env = np.max(np.abs(np.stack(list(seq.values()))), axis=0)
        # running maximum from the right: a non-increasing envelope
        env = np.maximum.accumulate(env[::-1])[::-1]
        fit = _fit_decay(env, n // 2)
        if fit is not None:
            C, a = fit
            q = math.exp(-a)
            # sum over |i| > N of C exp(-a |i|) = 2 C q^(N+1) / (1 - q)
            need = math.log(2.0 * C / (tol * (1.0 - q))) / a - 1.0
            n_max = max(8, int(math.ceil(need)))
            if n_max <= n:
                tail = 2.0 * C * q ** (n_max + 1) / (1.0 - q)
                return n_max, tail, (C, a)
        n *= 2
    raise DecayFitError("no exponential decay certificate for these covariance sequences")


def build_spectra(model, theta0, m=8192, n_max=None):
    """Sample the six transforms on a uniform grid of ``m`` frequencies.

    Parameters
    ----------
    model : CovarianceModel
        One free parameter, lag derivatives available.
    theta0 : float or array_like
    m : int
        Grid size.
    n_max : int, optional
        Truncation radius.  By default the smallest radius whose tail, under
        an exponential envelope fitted to the sequences, is below 1e-14.

    Raises
    ------
    DecayFitError
        If no exponential envelope can be fitted.
    """
    n_fit, tail, decay = _choose_n_max(model, theta0)
    if n_max is None:
        n_max = n_fit
    else:
        C, a = decay
        q = math.exp(-a)
        tail = 2.0 * C * q ** (n_max + 1) / (1.0 - q)
    seq = _sequences(model, theta0, n_max)
    omega = -math.pi + 2.0 * math.pi * np.arange(m) / m
    lag = np.arange(1, n_max + 1)
    cos = np.cos(np.outer(omega, lag))
    sin = np.sin(np.outer(omega, lag))

    def even(s):
        return s[0] + 2.0 * cos @ s[1:]

    def odd(s):
        # sum_n s_n exp(i n w) = i * 2 sum_{n > 0} s_n sin(n w)
        return 2.0 * sin @ s[1:]

    return SpectralSequences(
        omega=omega, f=even(seq["K"]), f_theta=even(seq["K_theta"]),
        f_t=odd(seq["K_t"]), f_t_theta=odd(seq["K_t_theta"]),
        f_tt=even(seq["K_tt"]), f_tt_theta=even(seq["K_tt_theta"]),
        n_max=int(n_max), tail_bound=float(tail), decay=decay, sequences=seq)


def mean_value(g, m0=256, rtol=1e-10, m_max=1 << 20):
    """Mean value of a ``2 pi``-periodic function over ``[-pi, pi]``.

    Parameters
    ----------
    g : ndarray or callable
        Samples on a uniform periodic grid, or a vectorised function; a
        callable is sampled on grids of doubling size until the relative
        change drops below ``rtol``.
    """
    if not callable(g):
        return float(np.mean(g))
    m = m0
    prev = None
    while m <= m_max:
        omega = -math.pi + 2.0 * math.pi * np.arange(m) / m
        cur = float(np.mean(g(omega)))
        if prev is not None and abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
        m *= 2
    return prev


class ClosedForms(NamedTuple):
    sigma_ml: float
    sigma_cv1: float
    sigma_cv2: float


def _check_f(sp):
    fmin = float(np.min(sp.f))
    if not fmin > MIN_F:
        raise SpectralDegeneracyError(f"min f = {fmin:.3g} is not above {MIN_F}")


def closed_form_sigmas(sp):
    """``(Sigma_ML, Sigma_CV1, Sigma_CV2)`` on the regular grid.

    Raises
    ------
    SpectralDegeneracyError
        If ``min f <= 1e-12`` on the grid.
    ArithmeticError
        If ``Sigma_CV2`` comes out clearly negative.
    """
    _check_f(sp)
    M = mean_value
    f, ft = sp.f, sp.f_theta
    m1 = M(1.0 / f)
    a = M(ft / f ** 2)
    ml = 0.5 * M(ft ** 2 / f ** 2)
    cv1 = (8.0 * m1 ** -6 * a ** 2 * M(1.0 / f ** 2)
           + 8.0 * m1 ** -4 * M(ft ** 2 / f ** 4)
           - 16.0 * m1 ** -5 * a * M(ft / f ** 3))
    b = M(ft ** 2 / f ** 3) * m1
    cv2 = 2.0 * m1 ** -3 * (b - a ** 2)
    if cv2 < -1e-10 * 2.0 * m1 ** -3 * max(abs(b), a * a):
        raise ArithmeticError(f"Sigma_CV2 = {cv2:.3g} < 0 violates Cauchy-Schwarz")
    return ClosedForms(ml, cv1, cv2)


def closed_form_d2_sigma_ml(sp):
    """Second derivative in epsilon of ``Sigma_ML`` at ``epsilon = 0``."""
    _check_f(sp)
    M = mean_value
    f, fth = sp.f, sp.f_theta
    ft, ftth, ftt, fttth = sp.f_t, sp.f_t_theta, sp.f_tt, sp.f_tt_theta
    m1 = M(1.0 / f)
    a = M(fth / f ** 2)
    terms = [
        2 / 3 * a * M(ft ** 2 * fth / f ** 2),
        -4 / 3 * m1 * M(ftth * ft * fth / f ** 2),
        -4 / 3 * a * M(ftth * ft / f),
        2 / 3 * m1 * M(ft ** 2 * fth ** 2 / f ** 3),
        2 / 3 * M(fth ** 2 / f ** 3) * M(ft ** 2 / f),
        -2 / 3 * M(ftt * fth ** 2 / f ** 3),
        2 / 3 * m1 * M(ftth ** 2 / f),
        2 / 3 * M(fttth * fth / f ** 2),
    ]
    return math.fsum(terms)


def closed_form_report(model, theta0, m=8192, n_max=None):
    """All closed-form quantities as a JSON-ready dict.

    Includes the asymptotic variances ``1 / Sigma_ML`` and
    ``Sigma_CV1 / Sigma_CV2^2`` and the ratio ``Var'' / Var = -Sigma'' /
    Sigma`` of the ML variance at ``epsilon = 0`` (where ``Sigma' = 0``).
    """
    sp = build_spectra(model, theta0, m=m, n_max=n_max)
    cf = closed_form_sigmas(sp)
    d2 = closed_form_d2_sigma_ml(sp)
    var_cv = cf.sigma_cv1 / cf.sigma_cv2 ** 2 if cf.sigma_cv2 > 0 else math.inf
    return {
        "theta0": np.atleast_1d(theta0).tolist(),
        "param": model.param_names[0],
        "sigma_ml": cf.sigma_ml, "sigma_cv1": cf.sigma_cv1, "sigma_cv2": cf.sigma_cv2,
        "var_ml": 1.0 / cf.sigma_ml, "var_cv": var_cv,
        "d2_sigma_ml": d2, "d2_var_ratio_ml": -d2 / cf.sigma_ml,
        "spectra": sp.to_dict(),
    }


def write_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
