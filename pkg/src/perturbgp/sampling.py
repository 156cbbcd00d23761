"""Perturbed regular grids ``v_i + eps * X_i``.

The grid points ``v_i`` enumerate ``{1, ..., N}^d`` in nested shells: all
points of ``{1..M}^d`` come before any point with a coordinate equal to
``M + 1``, and points inside a shell are in lexicographic order.  Hence
every prefix of length ``M^d`` is exactly the cube ``{1..M}^d`` and a
design of size ``n`` does not depend on any outer ``N``.

Randomness comes from numpy's counter-based ``Philox`` bit generator.  The
stream of replicate ``r`` under seed ``s`` is keyed by
``SeedSequence([s, r])``, so replicates are independent, reproducible and
can be generated in any order.  Perturbations do not depend on ``eps``:
designs built with the same ``(seed, replicate)`` at different ``eps`` share
their ``X`` (common random numbers).
"""

import csv
from dataclasses import dataclass, field, replace
import itertools
import math

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "PerturbedDesign",
    "grid_enumeration",
    "grid_side",
    "make_rng",
    "sample_design",
    "min_spacing",
    "design_to_csv",
]


def make_rng(seed, replicate=0):
    """Philox generator for stream ``(seed, replicate)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replicate)])
    return np.random.Generator(np.random.Philox(ss))


def grid_side(n, d):
    """Smallest ``N`` with ``N**d >= n``."""
    N = max(1, int(round(n ** (1.0 / d))))
    while N ** d < n:
        N += 1
    while N > 1 and (N - 1) ** d >= n:
        N -= 1
    return N


def grid_enumeration(N, d):
    """Points of ``{1..N}^d`` in nested-shell order.

    Returns
    -------
    ndarray of int, shape (N**d, d)

    Examples
    --------
    >>> grid_enumeration(2, 2).tolist()
    [[1, 1], [1, 2], [2, 1], [2, 2]]
    """
    if N < 1 or d < 1:
        raise ValueError("need N >= 1 and d >= 1")
    total = N ** d
    if total > np.iinfo(np.intp).max // max(d, 1):
        raise OverflowError(f"{N}^{d} grid points exceed the index range")
    if d == 1:
        return np.arange(1, N + 1).reshape(-1, 1)
    shells = [np.ones((1, d), dtype=int)]
    for M in range(2, N + 1):
        pts = np.array(list(itertools.product(range(1, M + 1), repeat=d)))
        shells.append(pts[pts.max(axis=1) == M])
    return np.concatenate(shells)


def _uniform(rng, shape):
    return rng.uniform(-1.0, 1.0, size=shape)


@dataclass(frozen=True)
class PerturbedDesign:
    """Observation points ``v_i + epsilon * X_i``.

    Attributes
    ----------
    grid_points : ndarray, shape (n, d)
        The integer grid points ``v_i``.
    perturbations : ndarray, shape (n, d)
        The ``X_i``, componentwise in ``[-1, 1]``.
    epsilon : float
        Regularity parameter.
    seed, replicate : int or None
        Stream that produced the perturbations.
    """

    grid_points: np.ndarray
    perturbations: np.ndarray
    epsilon: float
    seed: object = None
    replicate: int = 0
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = self.grid_points + self.epsilon * self.perturbations
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.grid_points.shape[0]

    @property
    def d(self):
        return self.grid_points.shape[1]

    @property
    def N(self):
        return int(self.grid_points.max()) if self.n else 0

    def with_epsilon(self, epsilon):
        """Same grid and perturbations at another regularity parameter."""
        return replace(self, epsilon=float(epsilon))

    def reflected(self):
        """Design built from ``-X``; has the same law as ``self``."""
        return replace(self, perturbations=-self.perturbations)


def sample_design(n, d=1, epsilon=0.0, seed=0, replicate=0, distribution=None):
    """Draw a perturbed grid design.

    Parameters
    ----------
    n : int
        Number of points.
    d : int
        Dimension.
    epsilon : float
        Regularity parameter in ``[0, 1/2)``.
    seed, replicate : int
        Stream key (see module docstring).
    distribution : callable, optional
        ``distribution(rng, shape)`` returning values in ``[-1, 1]``;
        uniform on ``[-1, 1]`` when omitted.

    Returns
    -------
    PerturbedDesign
    """
    epsilon = float(epsilon)
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(
            f"epsilon must lie in [0, 1/2) so that distinct points keep a "
            f"spacing of at least 1 - 2*epsilon > 0; got {epsilon}")
    if n < 1:
        raise ValueError("n must be positive")
    grid = grid_enumeration(grid_side(n, d), d)[:n]
    rng = make_rng(seed, replicate)
    draw = _uniform if distribution is None else distribution
    X = np.asarray(draw(rng, (n, d)), dtype=float)
    if X.shape != (n, d) or np.any(np.abs(X) > 1.0):
        raise ValueError("perturbation distribution must return (n, d) values in [-1, 1]")
    grid.setflags(write=False)
    X.setflags(write=False)
    return PerturbedDesign(grid, X, epsilon, seed, int(replicate))


def min_spacing(design):
    """Smallest sup-norm distance between two design points."""
    if design.n < 2:
        return math.inf
    tree = cKDTree(design.points)
    dist, _ = tree.query(design.points, k=2, p=np.inf)
    return float(dist[:, 1].min())


def design_to_csv(design, path):
    """Write one row per point: index, v components, X components, point components."""
    d = design.d
    header = (["index"] + [f"v{k + 1}" for k in range(d)]
              + [f"x{k + 1}" for k in range(d)] + [f"point{k + 1}" for k in range(d)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(design.n):
            writer.writerow([i + 1, *design.grid_points[i].tolist(),
                             *(repr(float(v)) for v in design.perturbations[i]),
                             *(repr(float(v)) for v in design.points[i])])
