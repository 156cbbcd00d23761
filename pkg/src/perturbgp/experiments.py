"""Experiment configurations and runners behind the command line.

A configuration is a flat key-value text file (``key = value``, ``#``
comments, lists separated by commas)::

    kind = map
    map_type = global
    estimate = ell
    ell_grid = 0.3, 3, 5
    nu_grid = 0.5, 5, 5
    eps = 0, 0.45
    n = 512
    replicates = 16
    seed = 1

Every runner returns a list of row dicts in deterministic cell order, and a
JSON-ready dict with the full outputs.  :func:`run` writes them as a CSV
table and a JSON sidecar.
"""

from dataclasses import asdict, dataclass, field, fields
import csv
import json
import math
import platform
import time

import numpy as np
from scipy import stats

from . import __version__
from .asymptotics import asym_report, eps_second_derivative
from .covariance import MaternModel, ParamBox
from .estimators import estimate
from .gp_core import make_dataset
from .parallel import map_ordered, resolve_threads
from .prediction import pred_error_sweep
from .sampling import sample_design
from .toeplitz import closed_form_report

__all__ = [
    "KINDS",
    "ConfigError",
    "BudgetExceeded",
    "CellFailure",
    "ExperimentConfig",
    "parse_config_text",
    "load_config",
    "validate",
    "run",
    "run_experiment",
]

KINDS = ("estimate", "asymvar", "toeplitz", "eps-sweep", "map", "joint", "predict",
         "normality")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class BudgetExceeded(RuntimeError):
    """The wall-time budget ran out before all cells were done."""


class CellFailure(RuntimeError):
    """A numerical failure in one experiment cell."""

    def __init__(self, cell, exc):
        self.cell = cell
        super().__init__(f"numerical failure in cell {cell}: {type(exc).__name__}: {exc}")


def _floats(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if not text:
        return []
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    """Settings of one experiment.

    ``estimate`` names the free parameter(s): ``ell``, ``nu`` or ``ell,nu``.
    Parameter points come from ``points`` (``ell:nu`` pairs) or from the
    ``ell_grid`` x ``nu_grid`` product (each ``lo, hi, count``).
    """

    kind: str = "asymvar"
    estimate: tuple = ("ell",)
    estimator: str = "ML"
    points: list = field(default_factory=lambda: [(0.5, 2.5)])
    ell_grid: tuple = ()
    nu_grid: tuple = ()
    eps: list = field(default_factory=lambda: [0.0, 0.45])
    n: int = 1024
    replicates: int = 32
    seed: int = 0
    delta: float = 0.02
    map_type: str = "global"
    n_starts: int = 8
    budget_seconds: float = math.inf
    threads: int = 1
    out: str = "out.csv"
    box_ell: tuple = (0.05, 10.0)
    box_nu: tuple = (0.25, 10.0)

    def parameter_points(self):
        if self.ell_grid and self.nu_grid:
            ells = np.linspace(*self.ell_grid[:2], int(self.ell_grid[2]))
            nus = np.linspace(*self.nu_grid[:2], int(self.nu_grid[2]))
            return [(float(a), float(b)) for a in ells for b in nus]
        return [tuple(map(float, p)) for p in self.points]

    def model(self, point):
        ell, nu = point
        free = tuple(self.estimate)
        return MaternModel(free=free, ell=None if "ell" in free else ell,
                           nu=None if "nu" in free else nu)

    def theta0(self, point):
        return np.array([dict(zip(("ell", "nu"), point))[k] for k in self.estimate])

    def box(self):
        bounds = {"ell": self.box_ell, "nu": self.box_nu}
        return ParamBox([bounds[k][0] for k in self.estimate],
                        [bounds[k][1] for k in self.estimate])

    def to_dict(self):
        d = asdict(self)
        d["budget_seconds"] = None if math.isinf(self.budget_seconds) else self.budget_seconds
        return d


_CONVERTERS = {
    "kind": str, "estimator": lambda v: str(v).upper(), "map_type": str, "out": str,
    "n": int, "replicates": int, "seed": int, "n_starts": int, "threads": int,
    "delta": float, "budget_seconds": float,
    "estimate": lambda v: tuple(s.strip() for s in str(v).split(",") if s.strip())
    if not isinstance(v, (list, tuple)) else tuple(v),
    "eps": _floats, "ell_grid": lambda v: tuple(_floats(v)),
    "nu_grid": lambda v: tuple(_floats(v)),
    "box_ell": lambda v: tuple(_floats(v)), "box_nu": lambda v: tuple(_floats(v)),
    "points": lambda v: [tuple(float(x) for x in p.split(":"))
                         for p in str(v).replace(";", ",").split(",") if p.strip()]
    if not isinstance(v, list) else v,
}


def parse_config_text(text):
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path=None, overrides=None):
    """Build a config from an optional file and overrides (overrides win)."""
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kwargs = {}
    names = {f.name for f in fields(ExperimentConfig)}
    for key, value in raw.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r}")
        try:
            kwargs[key] = _CONVERTERS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return ExperimentConfig(**kwargs)


def _cost_per_cell(cfg):
    """Rough seconds per replicate-cell on one core."""
    n, p = cfg.n, len(cfg.estimate)
    kernel = 1.5e-6 * n * n / 2 * (1 + 2 * ("nu" in cfg.estimate))
    dense = 2.5e-10 * n ** 3 * (2 + 4 * p)
    if cfg.kind in ("estimate", "normality"):
        return 20 * cfg.n_starts * (kernel + 2.5e-10 * n ** 3 * (1 + p))
    if cfg.kind == "predict":
        return 2.5e-10 * n ** 3 + 8 * n * n * 2e-8
    if cfg.kind == "toeplitz":
        return 0.1
    return kernel + dense


def validate(cfg):
    """Constraint violations, warnings and a dry-run cost estimate.

    Returns
    -------
    dict
        ``errors`` (list of str), ``warnings`` (list of str) and ``cost``.
    """
    errors, warnings = [], []
    if cfg.kind not in KINDS:
        errors.append(f"kind must be one of {', '.join(KINDS)}; got {cfg.kind!r}")
    if not cfg.estimate or any(e not in ("ell", "nu") for e in cfg.estimate) \
            or len(set(cfg.estimate)) != len(cfg.estimate):
        errors.append(f"estimate must be ell, nu or ell,nu; got {','.join(cfg.estimate)!r}")
    if cfg.estimator not in ("ML", "CV"):
        errors.append(f"estimator must be ML or CV; got {cfg.estimator!r}")
    if not cfg.eps:
        errors.append("eps list is empty")
    for e in cfg.eps:
        if not 0.0 <= e < 0.5:
            errors.append(
                f"epsilon {e} outside [0, 1/2): distinct points must keep a spacing of "
                f"at least 1 - 2*epsilon > 0")
    if cfg.n < 2:
        errors.append("n must be at least 2")
    if cfg.replicates < 1:
        errors.append("replicates must be positive")
    if not 0 <= cfg.seed < 2 ** 64:
        errors.append("seed must be an unsigned 64-bit integer")
    if cfg.threads < 1:
        errors.append("threads must be positive")
    if cfg.map_type not in ("local", "global"):
        errors.append(f"map_type must be local or global; got {cfg.map_type!r}")
    for name, g in (("ell_grid", cfg.ell_grid), ("nu_grid", cfg.nu_grid)):
        if g and (len(g) != 3 or g[2] < 1 or g[2] != int(g[2])):
            errors.append(f"{name} must be 'lo, hi, count'")
    if bool(cfg.ell_grid) != bool(cfg.nu_grid):
        errors.append("ell_grid and nu_grid must be given together")
    if cfg.kind == "toeplitz" and len(cfg.estimate) != 1:
        errors.append("toeplitz closed forms need exactly one estimated parameter")
    if cfg.kind == "joint" and tuple(cfg.estimate) != ("ell", "nu"):
        errors.append("joint criteria need estimate = ell,nu")
    if not 0 < cfg.delta < 0.5:
        errors.append("delta must lie in (0, 1/2)")
    if cfg.n_starts < 1:
        errors.append("n_starts must be positive")
    points = []
    if not errors:
        points = cfg.parameter_points()
        if not points:
            errors.append("no parameter points")
        box = {"ell": cfg.box_ell, "nu": cfg.box_nu}
        for pt in points:
            for name, val in zip(("ell", "nu"), pt):
                lo, hi = box[name]
                if not val > 0:
                    errors.append(f"{name} = {val} must be positive")
                elif name in cfg.estimate and not lo < val < hi:
                    if lo <= val <= hi:
                        warnings.append(f"{name} = {val} is on the box boundary; the "
                                        "asymptotic theory assumes an interior value")
                    else:
                        errors.append(f"{name} = {val} outside the box [{lo}, {hi}]")
    n_cells = len(points) * max(len(cfg.eps), 1)
    per_cell = _cost_per_cell(cfg)
    cost = {"matrix_size": cfg.n, "cells": n_cells, "replicates": cfg.replicates,
            "projected_seconds": float(n_cells * cfg.replicates * per_cell
                                       / resolve_threads(cfg.threads))}
    return {"errors": errors, "warnings": warnings, "cost": cost}


class _Clock:
    def __init__(self, budget):
        self.start = time.perf_counter()
        self.budget = budget

    def check(self):
        if time.perf_counter() - self.start > self.budget:
            raise BudgetExceeded(f"wall-time budget of {self.budget} s exceeded")

    def elapsed(self):
        return time.perf_counter() - self.start


def _cell(cell, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (np.linalg.LinAlgError, ArithmeticError, FloatingPointError) as exc:
        raise CellFailure(cell, exc) from exc


def _point_cols(pt):
    return {"ell0": pt[0], "nu0": pt[1]}


def _run_asymvar(cfg, clock, jobs):
    rows, full = [], []
    for pt in cfg.parameter_points():
        for eps in cfg.eps:
            clock.check()
            rep = _cell((pt, eps), asym_report, cfg.model(pt), cfg.theta0(pt), eps, cfg.n,
                        cfg.replicates, cfg.seed, n_jobs=jobs)
            row = _point_cols(pt)
            row.update(rep.csv_row())
            rows.append(row)
            full.append(rep.to_dict())
    return rows, {"reports": full}


def _run_toeplitz(cfg, clock, jobs):
    rows, full = [], []
    for pt in cfg.parameter_points():
        clock.check()
        rep = _cell(pt, closed_form_report, cfg.model(pt), cfg.theta0(pt))
        row = _point_cols(pt)
        row.update({k: rep[k] for k in ("param", "sigma_ml", "sigma_cv1", "sigma_cv2",
                                        "var_ml", "var_cv", "d2_sigma_ml", "d2_var_ratio_ml")})
        rows.append(row)
        full.append(rep)
    return rows, {"reports": full}


def _run_map(cfg, clock, jobs):
    rows = []
    names = cfg.estimate
    for pt in cfg.parameter_points():
        clock.check()
        model, th = cfg.model(pt), cfg.theta0(pt)
        row = _point_cols(pt)
        row.update({"n": cfg.n, "replicates": cfg.replicates, "seed": cfg.seed})
        if cfg.map_type == "local":
            der = _cell(pt, eps_second_derivative, model, th, cfg.n, cfg.replicates, cfg.seed,
                        cfg.delta, 0.0, n_jobs=jobs)
            for kind in ("ML", "CV"):
                ratio = np.diag(der.ratio(kind))
                row.update({f"ratio_{kind}_{nm}": float(r) for nm, r in zip(names, ratio)})
        else:
            lo, hi = min(cfg.eps), max(cfg.eps)
            r0 = _cell((pt, lo), asym_report, model, th, lo, cfg.n, cfg.replicates, cfg.seed,
                       n_jobs=jobs)
            r1 = _cell((pt, hi), asym_report, model, th, hi, cfg.n, cfg.replicates, cfg.seed,
                       n_jobs=jobs)
            row.update({"eps_low": lo, "eps_high": hi})
            for kind, a, b in (("ML", r0.asym_cov_ml, r1.asym_cov_ml),
                               ("CV", r0.asym_cov_cv, r1.asym_cov_cv)):
                row.update({f"ratio_{kind}_{nm}": float(a[i, i] / b[i, i])
                            for i, nm in enumerate(names)})
            row.update({f"cv_over_ml_{nm}_eps_high": float(r1.asym_cov_cv[i, i]
                                                             / r1.asym_cov_ml[i, i])
                        for i, nm in enumerate(names)})
        rows.append(row)
    return rows, {}


def _run_predict(cfg, clock, jobs):
    rows = []
    model = MaternModel()
    for pt in cfg.parameter_points():
        clock.check()
        reps = _cell(pt, pred_error_sweep, model, list(pt), cfg.eps, cfg.n, cfg.replicates,
                     cfg.seed, n_jobs=jobs)
        for r in reps:
            rows.append({"epsilon": r.epsilon, "ell0": pt[0], "nu0": pt[1], "n": r.n,
                         "E_mean": r.E_value, "E_stderr": r.std_error,
                         "replicates": r.replicates})
    return rows, {}


def _estimate_one(cfg, pt, eps, r):
    model, th = cfg.model(pt), cfg.theta0(pt)
    design = sample_design(cfg.n, 1, eps, seed=cfg.seed, replicate=r)
    ds = make_dataset(model, th, design, seed=cfg.seed, replicate=r)
    res = estimate(model, ds, cfg.estimator, box=cfg.box(), n_starts=cfg.n_starts)
    row = _point_cols(pt)
    row.update({"epsilon": eps, "replicate": r, "n": cfg.n, "seed": cfg.seed,
                "estimator": cfg.estimator})
    row.update({f"{nm}_hat": float(v) for nm, v in zip(cfg.estimate, res.theta_hat)})
    row.update({"objective": res.objective_at_opt, "converged": int(res.converged),
                "boundary_hit": int(res.boundary_hit)})
    return row


def _run_estimate(cfg, clock, jobs):
    rows = []
    for pt in cfg.parameter_points():
        for eps in cfg.eps:
            clock.check()
            rows.extend(map_ordered(lambda r: _cell((pt, eps, r), _estimate_one, cfg, pt, eps, r),
                                    range(cfg.replicates), jobs))
    return rows, {}


def _run_normality(cfg, clock, jobs):
    rows, _ = _run_estimate(cfg, clock, jobs)
    summary = []
    for pt in cfg.parameter_points():
        for eps in cfg.eps:
            clock.check()
            rep = _cell((pt, eps), asym_report, cfg.model(pt), cfg.theta0(pt), eps,
                        max(cfg.n, 1024), 8, cfg.seed + 1, n_jobs=jobs)
            cov = rep.asym_cov_ml if cfg.estimator == "ML" else rep.asym_cov_cv
            sel = [r for r in rows if (r["ell0"], r["nu0"], r["epsilon"]) == (*pt, eps)]
            for i, nm in enumerate(cfg.estimate):
                z = np.array([math.sqrt(cfg.n) * (r[f"{nm}_hat"] - cfg.theta0(pt)[i])
                              for r in sel])
                var_pred = float(cov[i, i])
                half = stats.norm.ppf(0.95) * math.sqrt(var_pred)
                ad = stats.anderson(z / math.sqrt(var_pred))
                summary.append({"ell0": pt[0], "nu0": pt[1], "epsilon": eps, "param": nm,
                                "empirical_var": float(np.var(z, ddof=1)),
                                "asymptotic_var": var_pred,
                                "coverage90": float(np.mean(np.abs(z) <= half)),
                                "anderson_stat": float(ad.statistic),
                                "anderson_crit_1pct": float(ad.critical_values[-1])})
    return summary, {"replicates": rows}


# eps-sweep and joint share the asymptotic-report runner; they differ in
# their validated settings (an epsilon list, and estimate = ell,nu)
_RUNNERS = {"asymvar": _run_asymvar, "eps-sweep": _run_asymvar, "joint": _run_asymvar,
            "toeplitz": _run_toeplitz, "map": _run_map, "predict": _run_predict,
            "estimate": _run_estimate, "normality": _run_normality}


def run_experiment(cfg):
    """Run ``cfg`` and return ``(rows, extra)`` without writing files.

    Raises
    ------
    ConfigError, CellFailure, BudgetExceeded
    """
    diag = validate(cfg)
    if diag["errors"]:
        raise ConfigError("; ".join(diag["errors"]))
    clock = _Clock(cfg.budget_seconds)
    rows, extra = _RUNNERS[cfg.kind](cfg, clock, resolve_threads(cfg.threads))
    return rows, extra


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, path):
    """UTF-8, LF line endings, header from the union of keys in first-seen order."""
    cols = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def run(cfg):
    """Run, then write ``cfg.out`` (CSV) and ``cfg.out + '.json'`` (provenance).

    Returns the rows.
    """
    start = time.time()
    rows, extra = run_experiment(cfg)
    write_csv(rows, cfg.out)
    sidecar = {"config": cfg.to_dict(), "version": __version__,
               "numpy": np.__version__, "python": platform.python_version(),
               "seed": cfg.seed, "wall_seconds": time.time() - start,
               "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "output": extra}
    with open(cfg.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, default=_json_default)
    return rows


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")
