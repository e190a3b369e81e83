import math

import numpy as np
import pytest

from pcp.core import BallUnionSet, ConfigurationError, DimensionError, NormKind
from pcp.geometry import (
    contains,
    contains_many,
    default_bounds,
    measure_1d,
    measure_auto,
    measure_grid,
    measure_mc,
    union_length_1d,
)


def sweep_length(centers, radius):
    """Independent merged-interval oracle for equal-radius 1-D unions."""
    ivals = sorted((c - radius, c + radius) for c in centers)
    total = 0.0
    cur_lo, cur_hi = ivals[0]
    for lo, hi in ivals[1:]:
        if lo <= cur_hi:
            cur_hi = max(cur_hi, hi)
        else:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
    return total + (cur_hi - cur_lo)


def test_contains_boundary_inclusive():
    s = BallUnionSet(np.array([[1.0, 1.0]]), 0.0)
    assert contains(s, [1.0, 1.0])
    assert not contains(s, [1.0, 1.0 + 1e-9])


def test_contains_outside_radius():
    s = BallUnionSet(np.array([[0.0], [5.0]]), 1.0)
    assert not contains(s, [2.5])
    assert contains(s, [4.0])


def test_contains_infinite_radius():
    s = BallUnionSet(np.array([[0.0]]), math.inf)
    assert contains(s, [1e12])


def test_contains_dimension_mismatch():
    s = BallUnionSet(np.array([[0.0, 0.0]]), 1.0)
    with pytest.raises(DimensionError):
        contains(s, [0.0])


def test_measure_1d_disjoint():
    s = BallUnionSet(np.array([[0.0], [10.0]]), 1.0)
    assert measure_1d(s) == 4.0


def test_measure_1d_merged():
    s = BallUnionSet(np.array([[0.0], [1.5]]), 1.0)
    assert measure_1d(s) == 3.5


def test_measure_1d_identical_centers():
    s = BallUnionSet(np.zeros((7, 1)), 0.75)
    assert measure_1d(s) == 1.5


def test_measure_1d_requires_scalar():
    s = BallUnionSet(np.zeros((2, 2)), 1.0)
    with pytest.raises(DimensionError):
        measure_1d(s)


def test_measure_1d_infinite():
    assert math.isinf(measure_1d(BallUnionSet(np.zeros((1, 1)), math.inf)))


def test_union_length_matches_sweep_oracle():
    rng = np.random.default_rng(2)
    for _ in range(200):
        k = int(rng.integers(1, 20))
        centers = rng.standard_normal(k) * 3
        radius = float(rng.uniform(0.01, 2.0))
        assert union_length_1d(centers, radius) == pytest.approx(
            sweep_length(centers, radius), abs=1e-12
        )


def test_grid_unit_disk_area():
    s = BallUnionSet(np.array([[0.0, 0.0]]), 1.0)
    est = measure_grid(s, cells_per_dim=400)
    assert abs(est - math.pi) / math.pi < 0.01


def test_grid_unit_square_area():
    s = BallUnionSet(np.array([[0.0, 0.0]]), 1.0, NormKind.LINF)
    est = measure_grid(s, cells_per_dim=400)
    assert abs(est - 4.0) / 4.0 < 0.01


def test_grid_disjoint_disks_additive():
    s = BallUnionSet(np.array([[0.0, 0.0], [10.0, 0.0]]), 1.0)
    est = measure_grid(s, cells_per_dim=400)
    assert abs(est - 2 * math.pi) / (2 * math.pi) < 0.01


def test_grid_rejects_tight_bounds():
    s = BallUnionSet(np.array([[0.0, 0.0]]), 1.0)
    with pytest.raises(ConfigurationError):
        measure_grid(s, bounds=np.array([[-0.5, 0.5], [-0.5, 0.5]]))


def test_grid_cell_cap():
    s = BallUnionSet(np.zeros((1, 5)), 1.0)
    with pytest.raises(ConfigurationError):
        measure_grid(s, cells_per_dim=100)


def test_mc_unit_disk():
    s = BallUnionSet(np.array([[0.0, 0.0]]), 1.0)
    est, se = measure_mc(s, n_points=10**6, rng=np.random.default_rng(0))
    assert abs(est - math.pi) <= 3 * se


def test_mc_zero_radius():
    s = BallUnionSet(np.array([[0.0, 0.0]]), 0.0)
    est, _ = measure_mc(s, n_points=1000, rng=np.random.default_rng(0))
    assert est == 0.0


def test_mc_agrees_with_exact_1d():
    rng = np.random.default_rng(3)
    for _ in range(100):
        k = int(rng.integers(1, 10))
        s = BallUnionSet(rng.standard_normal((k, 1)), float(rng.uniform(0.05, 1.0)))
        exact = measure_1d(s)
        est, se = measure_mc(s, n_points=20000, rng=rng)
        # the 1e-9 default bounding margin biases a full-box hit fraction
        assert abs(est - exact) <= 3 * se + 1e-8


def test_mc_needs_enough_points():
    s = BallUnionSet(np.array([[0.0]]), 1.0)
    with pytest.raises(ConfigurationError):
        measure_mc(s, n_points=10)


def test_default_bounds_enclose():
    s = BallUnionSet(np.array([[0.0, 5.0], [1.0, -1.0]]), 2.0)
    b = default_bounds(s)
    assert np.all(b[:, 0] <= s.centers.min(axis=0) - 2.0)
    assert np.all(b[:, 1] >= s.centers.max(axis=0) + 2.0)


def test_measure_monotone_in_radius_and_centers():
    rng = np.random.default_rng(4)
    centers = rng.standard_normal((6, 2))
    small = measure_grid(BallUnionSet(centers, 0.5), cells_per_dim=150)
    large = measure_grid(BallUnionSet(centers, 0.8), cells_per_dim=150)
    assert large >= small
    sub = measure_1d(BallUnionSet(centers[:3, :1], 0.5))
    full = measure_1d(BallUnionSet(centers[:, :1], 0.5))
    assert full >= sub


def test_subadditivity_exact_1d():
    s = BallUnionSet(np.array([[0.0], [0.5], [4.0]]), 0.4)
    singles = 3 * 0.8
    assert measure_1d(s) <= singles
    disjoint = BallUnionSet(np.array([[0.0], [5.0], [10.0]]), 0.4)
    assert measure_1d(disjoint) == pytest.approx(3 * 0.8)


def test_measure_auto_dispatch():
    s1 = BallUnionSet(np.array([[0.0], [10.0]]), 1.0)
    assert measure_auto(s1) == 4.0
    s2 = BallUnionSet(np.array([[0.0, 0.0]]), 1.0)
    assert abs(measure_auto(s2, cells_per_dim=200) - math.pi) / math.pi < 0.02
    s5 = BallUnionSet(np.zeros((1, 5)), 1.0)
    v = measure_auto(s5, n_points=50000, rng=np.random.default_rng(0))
    # unit 5-ball volume is pi^2 * 8 / 15
    true = math.pi**2 * 8 / 15
    assert abs(v - true) / true < 0.15


def test_contains_many_vectorized():
    s = BallUnionSet(np.array([[0.0], [10.0]]), 1.0)
    pts = np.array([[0.5], [5.0], [9.2], [11.5]])
    assert list(contains_many(s, pts)) == [True, False, True, False]
