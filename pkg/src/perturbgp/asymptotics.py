"""Random-trace approximations of the asymptotic covariance matrices.

For a design with ``n`` points, ``R = R_theta0`` and ``dR_i = dR/dtheta_i``::

    Sigma_ML[i, j]  = (1/n) Tr(1/2 R^-1 dR_i R^-1 dR_j)
    Sigma_CV1[i, j] = (1/n) Tr(2 (M_i + M_i') R (M_j + M_j') R)
    Sigma_CV2[i, j] = E[d^2 CV / dtheta_i dtheta_j]

with ``M_i = R^-1 D^-2 (diag(a_i / D) - R^-1 dR_i) R^-1``, ``D = diag(R^-1)``
and ``a_i = diag(R^-1 dR_i R^-1)``.  ``Sigma_CV1`` is ``n`` times the
covariance of the CV gradient at ``theta0``.  The asymptotic covariance of
``sqrt(n) (theta_hat - theta0)`` is ``Sigma_ML^-1`` for ML and the sandwich
``Sigma_CV2^-1 Sigma_CV1 Sigma_CV2^-1`` for CV.  These limits have no closed
form off the regular grid.  They are approximated by averaging the traces
over independent random designs.
"""

from dataclasses import asdict, dataclass, field
import csv
import json

import numpy as np

from .gp_core import build_cov_and_grad
from .parallel import map_ordered
from .sampling import sample_design

__all__ = [
    "KINDS",
    "SingularInformationError",
    "TraceBundle",
    "TraceEstimate",
    "AsymptoticReport",
    "EpsDerivative",
    "trace_matrices",
    "trace_ml",
    "trace_cv1",
    "trace_cv2",
    "average_traces",
    "asym_report",
    "asymptotic_variances",
    "eps_second_derivative",
]

KINDS = ("ML", "CV1", "CV2")
COND_LIMIT = 1e12


class SingularInformationError(np.linalg.LinAlgError):
    """An information-type matrix is numerically singular."""


class TraceBundle:
    """Shared ``(R^-1, dR)`` inputs for all three trace kinds on one design."""

    def __init__(self, model, theta0, design):
        cov, dR = build_cov_and_grad(model, theta0, design)
        self.n = cov.n
        self.p = dR.shape[0]
        self.rinv = cov.inverse()
        self.dR = dR
        self.dinv = np.diag(self.rinv).copy()
        self.B = [self.rinv @ dRk for dRk in dR]       # R^-1 dR_i
        self.A = [Bk @ self.rinv for Bk in self.B]     # R^-1 dR_i R^-1
        self.a = [np.diag(Ak).copy() for Ak in self.A]

    def ml(self):
        p, n = self.p, self.n
        out = np.empty((p, p))
        for i in range(p):
            for j in range(i, p):
                out[i, j] = out[j, i] = 0.5 * np.sum(self.B[i] * self.B[j].T) / n
        return out

    def cv1(self):
        p, n = self.p, self.n
        d2 = self.dinv ** -2
        S = []
        for i in range(p):
            lam = self.a[i] / self.dinv
            # (M_i + M_i') R = R^-1 D^-2 (L_i - B_i) + R^-1 (L_i - B_i') D^-2
            left = self.rinv @ (d2[:, None] * (np.diag(lam) - self.B[i]))
            right = (self.rinv @ (np.diag(lam) - self.B[i].T)) * d2[None, :]
            S.append(left + right)
        out = np.empty((p, p))
        for i in range(p):
            for j in range(i, p):
                out[i, j] = out[j, i] = 2.0 * np.sum(S[i] * S[j].T) / n
        return out

    def cv2(self):
        p, n = self.p, self.n
        out = np.empty((p, p))
        for i in range(p):
            for j in range(i, p):
                quad = np.einsum("kl,lk->k", self.B[i], self.A[j])
                val = (-2.0 * np.sum(self.a[i] * self.a[j] / self.dinv ** 3)
                       + 2.0 * np.sum(quad / self.dinv ** 2))
                out[i, j] = out[j, i] = val / n
        return out

    def matrices(self, kinds=KINDS):
        return {k: getattr(self, k.lower())() for k in kinds}


def trace_matrices(model, theta0, design, kinds=KINDS):
    """All requested trace matrices from one shared bundle."""
    return TraceBundle(model, theta0, design).matrices(kinds)


def trace_ml(model, theta0, design):
    """``[(1/n) Tr(1/2 R^-1 dR_i R^-1 dR_j)]_{ij}``."""
    return trace_matrices(model, theta0, design, ("ML",))["ML"]


def trace_cv1(model, theta0, design):
    """``n`` times the conditional covariance of the CV gradient at ``theta0``."""
    return trace_matrices(model, theta0, design, ("CV1",))["CV1"]


def trace_cv2(model, theta0, design):
    """Conditional mean Hessian of the CV criterion at ``theta0``."""
    return trace_matrices(model, theta0, design, ("CV2",))["CV2"]


@dataclass
class TraceEstimate:
    """Monte Carlo mean of one trace kind over design replicates."""

    matrix_kind: str
    value: np.ndarray
    std_error: np.ndarray
    n: int
    n_replicates: int
    epsilon: float
    theta0: np.ndarray


def _design_factory(n, d, seed):
    def make(epsilon, replicate):
        return sample_design(n, d, epsilon, seed=seed, replicate=replicate)
    return make


def average_traces(model, theta0, designs, kinds=KINDS, n_jobs=1):
    """Per-kind mean and standard error of the traces over ``designs``.

    Returns ``(means, stderrs, samples)``; ``samples[k]`` stacks the
    per-design matrices in input order so the reduction does not depend on
    completion order.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    results = map_ordered(lambda des: trace_matrices(model, theta0, des, kinds), designs, n_jobs)
    samples = {k: np.stack([r[k] for r in results]) for k in kinds}
    means, errs = {}, {}
    for k, s in samples.items():
        means[k] = np.mean(s, axis=0)
        m = s.shape[0]
        errs[k] = np.std(s, axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(means[k])
    return means, errs, samples


def _check_conditioning(mat, name):
    c = np.linalg.cond(mat)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise SingularInformationError(
            f"{name} is numerically singular (condition number {c:.3g}); "
            "the parameterisation is not identifiable here")


def asymptotic_variances(sigma_ml, sigma_cv1, sigma_cv2, check=True):
    """``(Sigma_ML^-1, Sigma_CV2^-1 Sigma_CV1 Sigma_CV2^-1)``."""
    if check:
        _check_conditioning(sigma_ml, "Sigma_ML")
    cov_ml = np.linalg.inv(sigma_ml)
    cov_cv = None
    if sigma_cv1 is not None and sigma_cv2 is not None:
        if check:
            _check_conditioning(sigma_cv2, "Sigma_CV2")
        inv2 = np.linalg.inv(sigma_cv2)
        cov_cv = inv2 @ sigma_cv1 @ inv2
        cov_cv = 0.5 * (cov_cv + cov_cv.T)
    return cov_ml, cov_cv


def _scalar_criteria(cov, names):
    """V per parameter, plus C and D for a joint (ell, nu) estimate."""
    out = {f"V_{name}": float(cov[i, i]) for i, name in enumerate(names)}
    if cov.shape[0] == 2:
        out["C"] = float(cov[0, 1])
        out["D"] = float(cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2)
    return out


@dataclass
class AsymptoticReport:
    """Averaged trace matrices with the derived asymptotic covariances.

    ``criteria_ml`` and ``criteria_cv`` hold ``V_<param>`` for every free
    parameter and, for two parameters, ``C`` (covariance) and ``D``
    (determinant).
    """

    sigma_ml: np.ndarray
    sigma_cv1: np.ndarray
    sigma_cv2: np.ndarray
    asym_cov_ml: np.ndarray
    asym_cov_cv: np.ndarray
    criteria_ml: dict
    criteria_cv: dict
    std_error: dict
    param_names: tuple
    theta0: np.ndarray
    epsilon: float
    n: int
    n_replicates: int
    seed: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif k == "std_error":
                v = {kk: vv.tolist() for kk, vv in v.items()}
            out[k] = v
        out["param_names"] = list(self.param_names)
        return out

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def csv_row(self):
        row = {"epsilon": self.epsilon, "n": self.n, "replicates": self.n_replicates,
               "seed": self.seed}
        row.update({name: float(t) for name, t in zip(self.param_names, self.theta0)})
        row.update({f"ML_{k}": v for k, v in self.criteria_ml.items()})
        row.update({f"CV_{k}": v for k, v in self.criteria_cv.items()})
        return row

    def write_csv(self, path):
        row = self.csv_row()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
            w.writeheader()
            w.writerow(row)


def asym_report(model, theta0, epsilon, n=1024, n_replicates=32, seed=0, d=1,
                n_jobs=1, check=True):
    """Average the random traces over independent designs and invert.

    At ``epsilon = 0`` every design is the regular grid, so a single
    replicate is evaluated whatever ``n_replicates`` says.

    Raises
    ------
    SingularInformationError
        If ``Sigma_ML`` or ``Sigma_CV2`` has condition number above 1e12
        (only when ``check``).
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    reps = 1 if epsilon == 0 else int(n_replicates)
    make = _design_factory(n, d, seed)
    designs = [make(epsilon, r) for r in range(reps)]
    means, errs, _ = average_traces(model, theta0, designs, n_jobs=n_jobs)
    cov_ml, cov_cv = asymptotic_variances(means["ML"], means["CV1"], means["CV2"], check)
    names = tuple(model.param_names)
    return AsymptoticReport(
        sigma_ml=means["ML"], sigma_cv1=means["CV1"], sigma_cv2=means["CV2"],
        asym_cov_ml=cov_ml, asym_cov_cv=cov_cv,
        criteria_ml=_scalar_criteria(cov_ml, names),
        criteria_cv=_scalar_criteria(cov_cv, names),
        std_error=errs, param_names=names, theta0=theta0, epsilon=float(epsilon),
        n=int(n), n_replicates=reps, seed=int(seed))


def _variance_of(kind, S):
    """Asymptotic covariance for ``kind`` ("ML" or "CV") from averaged traces."""
    if kind == "ML":
        return np.linalg.inv(S["ML"])
    inv2 = np.linalg.inv(S["CV2"])
    return inv2 @ S["CV1"] @ inv2


@dataclass
class EpsDerivative:
    """Second derivatives in epsilon of the averaged traces.

    Attributes
    ----------
    sigma : dict
        Averaged traces at ``epsilon`` per kind.
    d2_sigma : dict
        Second differences per kind.
    variance : dict
        Asymptotic covariance at ``epsilon`` for "ML" and "CV".
    d2_variance : dict
        Second differences of the asymptotic covariances.
    """

    sigma: dict
    d2_sigma: dict
    variance: dict
    d2_variance: dict
    epsilon: float
    delta: float
    n: int
    n_replicates: int

    def ratio(self, kind="ML"):
        """Elementwise ``Var'' / Var`` for ``kind`` in {"ML", "CV"}."""
        return self.d2_variance[kind] / self.variance[kind]


def eps_second_derivative(model, theta0, n=1024, n_replicates=32, seed=0, delta=0.02,
                          epsilon=0.0, d=1, kinds=KINDS, n_jobs=1):
    """Common-random-number second differences of the traces in epsilon.

    For ``epsilon > 0`` this is the central difference
    ``[S(eps + delta) - 2 S(eps) + S(eps - delta)] / delta^2`` with all three
    values computed on the same perturbations.  At ``epsilon = 0`` the
    traces are even in epsilon, so ``2 [S(delta) - S(0)] / delta^2`` is used.
    Each replicate is paired with its reflection ``-X``, which removes the
    first-order term in ``X`` from every difference.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if not 0 <= epsilon < 0.5 or epsilon + delta >= 0.5:
        raise ValueError("need 0 <= epsilon and epsilon + delta < 1/2")
    if 0 < epsilon < delta:
        raise ValueError("delta must not exceed epsilon when epsilon > 0")
    base = [sample_design(n, d, 0.0, seed=seed, replicate=r) for r in range(n_replicates)]
    pairs = [x for b in base for x in (b, b.reflected())]

    def at(eps):
        return average_traces(model, theta0, [b.with_epsilon(eps) for b in pairs],
                              kinds, n_jobs)[0]

    if epsilon == 0:
        s0 = trace_matrices(model, theta0, base[0].with_epsilon(0.0), kinds)
        s_plus = at(delta)
        d2 = {k: 2.0 * (s_plus[k] - s0[k]) / delta ** 2 for k in kinds}
        vals = [s0, s_plus]
        coef = (-2.0, 2.0)
    else:
        s_minus, s0, s_plus = at(epsilon - delta), at(epsilon), at(epsilon + delta)
        d2 = {k: (s_plus[k] - 2.0 * s0[k] + s_minus[k]) / delta ** 2 for k in kinds}
        vals = [s_minus, s0, s_plus]
        coef = (1.0, -2.0, 1.0)
    var, d2var = {}, {}
    for kind, need in (("ML", ("ML",)), ("CV", ("CV1", "CV2"))):
        if all(k in kinds for k in need):
            vs = [_variance_of(kind, S) for S in vals]
            var[kind] = _variance_of(kind, s0)
            d2var[kind] = sum(c * v for c, v in zip(coef, vs)) / delta ** 2
    return EpsDerivative(s0, d2, var, d2var, float(epsilon), float(delta), int(n),
                         int(n_replicates))
