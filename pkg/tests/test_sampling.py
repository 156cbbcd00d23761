import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perturbgp.sampling import (design_to_csv, grid_enumeration, grid_side, make_rng,
                                min_spacing, sample_design)


def test_enumeration_1d():
    assert grid_enumeration(2, 1).ravel().tolist() == [1, 2]


def test_enumeration_2d_nesting():
    g = grid_enumeration(2, 2)
    assert g[0].tolist() == [1, 1]
    assert {tuple(p) for p in g[:4]} == {(1, 1), (1, 2), (2, 1), (2, 2)}


@pytest.mark.parametrize("N,d", [(3, 2), (4, 3), (5, 2), (6, 1)])
def test_enumeration_shells(N, d):
    g = grid_enumeration(N, d)
    assert len({tuple(p) for p in g}) == N ** d
    for M in range(1, N + 1):
        cube = set(itertools.product(range(1, M + 1), repeat=d))
        assert {tuple(p) for p in g[:M ** d]} == cube


def test_enumeration_errors():
    with pytest.raises(ValueError):
        grid_enumeration(0, 1)
    with pytest.raises(OverflowError):
        grid_enumeration(10 ** 7, 3)


def test_grid_side():
    assert grid_side(64, 2) == 8
    assert grid_side(65, 2) == 9
    assert grid_side(1000, 3) == 10
    assert grid_side(7, 1) == 7


def test_unperturbed_grid():
    d = sample_design(4, 1, 0.0, seed=5)
    assert d.points.ravel().tolist() == [1.0, 2.0, 3.0, 4.0]


def test_spacing_two_dim_design():
    d = sample_design(64, 2, 0.375, seed=3)
    assert d.N == 8
    assert min_spacing(d) >= 0.25


def test_perturbation_moments():
    d = sample_design(1000, 1, 0.45, seed=9)
    x = d.perturbations.ravel()
    assert abs(x.mean()) < 0.05
    assert x.var() == pytest.approx(1 / 3, rel=0.1)


def test_determinism_and_streams():
    a = sample_design(50, 2, 0.3, seed=1, replicate=4)
    b = sample_design(50, 2, 0.3, seed=1, replicate=4)
    c = sample_design(50, 2, 0.3, seed=1, replicate=5)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.perturbations, c.perturbations)
    # common random numbers across epsilon
    e = sample_design(50, 2, 0.1, seed=1, replicate=4)
    np.testing.assert_array_equal(a.perturbations, e.perturbations)
    np.testing.assert_array_equal(a.with_epsilon(0.1).points, e.points)


def test_rng_is_philox():
    assert type(make_rng(3, 1).bit_generator).__name__ == "Philox"


def test_reflection():
    a = sample_design(10, 1, 0.2, seed=2)
    np.testing.assert_array_equal(a.reflected().perturbations, -a.perturbations)


@pytest.mark.parametrize("eps", [0.5, 0.7, -0.1])
def test_rejects_epsilon(eps):
    with pytest.raises(ValueError, match="spacing"):
        sample_design(10, 1, eps)


def test_points_read_only():
    d = sample_design(5, 1, 0.2)
    with pytest.raises(ValueError):
        d.points[0, 0] = 3.0


def test_distribution_hook():
    d = sample_design(20, 1, 0.4, seed=1, distribution=lambda rng, shape: np.ones(shape))
    np.testing.assert_allclose(d.points.ravel(), np.arange(1, 21) + 0.4)
    with pytest.raises(ValueError):
        sample_design(5, 1, 0.4, distribution=lambda rng, shape: 2 * np.ones(shape))


@given(n=st.integers(2, 150), d=st.integers(1, 3), eps=st.floats(0.0, 0.499),
       seed=st.integers(0, 2 ** 63))
def test_min_spacing_property(n, d, eps, seed):
    des = sample_design(n, d, eps, seed=seed)
    assert np.all(np.abs(des.perturbations) <= 1.0)
    assert min_spacing(des) >= 1 - 2 * eps - 1e-12


def test_csv(tmp_path):
    d = sample_design(4, 2, 0.1, seed=0)
    path = tmp_path / "design.csv"
    design_to_csv(d, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,v1,v2,x1,x2,point1,point2"
    assert len(lines) == 5
    row = lines[2].split(",")
    assert float(row[5]) == d.points[1, 0]
