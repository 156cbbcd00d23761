"""Modified Bessel function of the second kind for real order.

The evaluation follows Temme's method: the order is split as
``nu = mu + k`` with ``|mu| <= 1/2`` and integer ``k``.  The pair
``(K_mu, K_{mu+1})`` is obtained from Temme's power series when ``x < 2``
and from Steed's evaluation of the second continued fraction when
``x >= 2``; the requested order is then reached by the (stable) upward
recurrence

    K_{m+1}(x) = K_{m-1}(x) + (2 m / x) K_m(x).

All routines are vectorised over ``x`` for a scalar order.  Internally the
exponentially scaled function ``K_nu(x) exp(x)`` is carried so that large
arguments do not underflow.
"""

import math

import numpy as np

__all__ = ["bessel_k", "bessel_k_scaled", "kv_scaled_pair"]

_EPS = 1e-16
_MAXIT = 10000

# Taylor coefficients of 1/Gamma(1 + z) about z = 0.
_RGAMMA1P = np.array([
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
    -2.2987456844353702066e-19,
])


def _temme_gammas(mu):
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) for |mu| <= 1/2.

    gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu) and
    gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2, both summed from the
    Taylor series so that gam1 keeps full precision as mu -> 0.
    """
    powers = mu ** np.arange(_RGAMMA1P.size)
    odd = _RGAMMA1P[1::2]
    even = _RGAMMA1P[0::2]
    gam1 = -float(np.dot(odd, mu ** np.arange(0, 2 * odd.size, 2)))
    gam2 = float(np.dot(even, mu ** np.arange(0, 2 * even.size, 2)))
    gampl = float(np.dot(_RGAMMA1P, powers))
    gammi = float(np.dot(_RGAMMA1P, powers * (-1.0) ** np.arange(_RGAMMA1P.size)))
    return gam1, gam2, gampl, gammi


def _temme_series(mu, x):
    """Scaled (K_mu, K_{mu+1}) * exp(x) for 0 < x < 2 by Temme's series."""
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    with np.errstate(invalid="ignore", divide="ignore"):
        fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / e)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    e = np.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = np.ones_like(x)
    d = x2 * x2
    total1 = p.copy()
    mu2 = mu * mu
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu2)
        c = c * d / i
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total += delta
        delta1 = c * (p - i * ff)
        total1 += delta1
        if np.all(np.abs(delta) < np.abs(total) * _EPS):
            break
    else:
        raise ArithmeticError("Temme series failed to converge")
    scale = np.exp(x)
    return total * scale, total1 * (2.0 / x) * scale


def _steed_cf2(mu, x):
    """Scaled (K_mu, K_{mu+1}) * exp(x) for x >= 2 by Steed's CF2 algorithm."""
    mu2 = mu * mu
    a1 = 0.25 - mu2
    h_out = np.empty_like(x)
    s_out = np.empty_like(x)
    # converged lanes are retired so that the iteration only touches the
    # arguments still in progress (those closest to x = 2 take longest)
    idx = np.arange(x.size)
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    q = np.full_like(x, a1)
    c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        done = np.abs(dels) < np.abs(s) * _EPS
        if done.any():
            h_out[idx[done]] = h[done]
            s_out[idx[done]] = s[done]
            keep = ~done
            if not keep.any():
                break
            idx, b, d, h, delh = idx[keep], b[keep], d[keep], h[keep], delh[keep]
            q1, q2, q, s = q1[keep], q2[keep], q[keep], s[keep]
        # c grows factorially while q decays; move the scale into q1, q2
        if abs(c) > 1e200:
            q1, q2 = q1 * c, q2 * c
            c = 1.0
    else:
        raise ArithmeticError("continued fraction CF2 failed to converge")
    h = a1 * h_out
    kmu = np.sqrt(math.pi / (2.0 * x)) / s_out
    kmu1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, kmu1


def kv_scaled_pair(nu, x):
    """Return ``(K_nu(x) e^x, K_{nu+1}(x) e^x)`` for real ``nu >= -1/2``.

    No argument validation; ``x`` must be a positive float array.
    """
    x = np.asarray(x, dtype=float)
    nl = int(math.floor(nu + 0.5))
    mu = nu - nl
    kmu = np.empty_like(x)
    kmu1 = np.empty_like(x)
    small = x < 2.0
    if small.any():
        kmu[small], kmu1[small] = _temme_series(mu, x[small])
    if (~small).any():
        kmu[~small], kmu1[~small] = _steed_cf2(mu, x[~small])
    xi2 = 2.0 / x
    order = mu
    for _ in range(nl):
        order += 1.0
        kmu, kmu1 = kmu1, order * xi2 * kmu1 + kmu
    return kmu, kmu1


def bessel_k_scaled(nu, x):
    """Exponentially scaled ``K_nu(x) * exp(x)`` for any real order.

    Uses ``K_{-nu} = K_nu``.  ``x`` must be positive; no validation.
    """
    return kv_scaled_pair(abs(float(nu)), x)[0]


def bessel_k(nu, x):
    """Modified Bessel function of the second kind ``K_nu(x)``.

    Parameters
    ----------
    nu : float
        Order, strictly positive.
    x : float or array_like
        Argument(s), strictly positive.

    Returns
    -------
    float or ndarray
        ``K_nu(x)``, with the shape of ``x``.

    Raises
    ------
    ValueError
        If ``nu <= 0`` or any ``x <= 0``.
    OverflowError
        If the result is not representable (too large for tiny ``x`` and
        large order, or underflow of ``exp(-x)`` for huge ``x``).
    """
    nu = float(nu)
    if not nu > 0.0:
        raise ValueError(f"order must be positive, got {nu}")
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0.0)):
        raise ValueError("argument must be positive")
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    with np.errstate(over="ignore", under="ignore"):
        scaled = bessel_k_scaled(nu, xa)
        out = scaled * np.exp(-xa)
    bad = ~np.isfinite(out) | ((out == 0.0) & (scaled > 0.0))
    if bad.any():
        raise OverflowError(
            f"K_{nu}(x) not representable for x={xa[bad][0]!r}")
    return float(out[0]) if scalar else out
