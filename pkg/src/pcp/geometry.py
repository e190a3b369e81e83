"""Membership and Lebesgue measure of ball unions: exact in 1-D, grid and
Monte-Carlo estimators for higher dimensions."""

from __future__ import annotations

import math

import numpy as np

from .core import BallUnionSet, ConfigurationError, DataError, DimensionError, _norms

MAX_GRID_CELLS = 10**8
MC_DEFAULT_POINTS = 20000
GRID_DEFAULT_CELLS = 100


def contains(ball_set: BallUnionSet, y) -> bool:
    """True iff some center is within the radius of y (boundary included)."""
    return bool(contains_many(ball_set, np.atleast_2d(np.asarray(y, dtype=float)))[0])


def contains_many(ball_set: BallUnionSet, ys: np.ndarray) -> np.ndarray:
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != ball_set.d:
        raise DimensionError(
            f"points have dimension {ys.shape[1]}, set has {ball_set.d}"
        )
    if ball_set.is_infinite:
        return np.ones(ys.shape[0], dtype=bool)
    dists = _norms(ys[:, None, :] - ball_set.centers[None, :, :], ball_set.norm)
    return np.min(dists, axis=1) <= ball_set.radius


def union_length_1d(centers: np.ndarray, radius: float) -> float:
    """Total length of a union of equal intervals [c - r, c + r]."""
    c = np.sort(np.asarray(centers, dtype=float).ravel())
    gaps = np.diff(c)
    return float(2 * radius + np.sum(np.minimum(gaps, 2 * radius)))


def measure_1d(ball_set: BallUnionSet) -> float:
    """Exact merged-interval length of a scalar ball union."""
    if ball_set.d != 1:
        raise DimensionError("measure_1d requires d = 1")
    if ball_set.is_infinite:
        return math.inf
    return union_length_1d(ball_set.centers[:, 0], ball_set.radius)


def default_bounds(ball_set: BallUnionSet, margin: float = 1e-9) -> np.ndarray:
    """Axis-aligned box of the centers inflated by the radius plus a margin."""
    if ball_set.is_infinite:
        raise DataError("infinite radius has no bounding box")
    r = ball_set.radius + margin
    lo = ball_set.centers.min(axis=0) - r
    hi = ball_set.centers.max(axis=0) + r
    return np.stack([lo, hi], axis=1)


def _check_bounds(ball_set: BallUnionSet, bounds: np.ndarray) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (ball_set.d, 2):
        raise DimensionError(f"bounds must have shape ({ball_set.d}, 2)")
    # L-inf ball of the radius always encloses the L1/L2 balls
    lo = ball_set.centers.min(axis=0) - ball_set.radius
    hi = ball_set.centers.max(axis=0) + ball_set.radius
    if np.any(bounds[:, 0] > lo + 1e-12) or np.any(bounds[:, 1] < hi - 1e-12):
        raise ConfigurationError("bounds do not enclose all centers inflated by the radius")
    return bounds


def measure_grid(
    ball_set: BallUnionSet,
    bounds: np.ndarray | None = None,
    cells_per_dim: int = GRID_DEFAULT_CELLS,
) -> float:
    """Cell-center counting estimate of the union volume on a regular grid."""
    if ball_set.is_infinite:
        return math.inf
    if bounds is None:
        bounds = default_bounds(ball_set)
    bounds = _check_bounds(ball_set, bounds)
    d = ball_set.d
    if cells_per_dim**d > MAX_GRID_CELLS:
        raise ConfigurationError(
            f"grid of {cells_per_dim}^{d} cells exceeds the {MAX_GRID_CELLS} cap; use measure_mc"
        )
    axes = [
        bounds[j, 0] + (np.arange(cells_per_dim) + 0.5) * (bounds[j, 1] - bounds[j, 0]) / cells_per_dim
        for j in range(d)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    cell_vol = float(np.prod((bounds[:, 1] - bounds[:, 0]) / cells_per_dim))
    hits = 0
    chunk = 200000
    for start in range(0, pts.shape[0], chunk):
        hits += int(np.count_nonzero(contains_many(ball_set, pts[start:start + chunk])))
    return hits * cell_vol


def measure_mc(
    ball_set: BallUnionSet,
    bounds: np.ndarray | None = None,
    n_points: int = MC_DEFAULT_POINTS,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Uniform-sampling volume estimate with its binomial standard error."""
    if ball_set.is_infinite:
        return math.inf, math.inf
    if n_points < 100:
        raise ConfigurationError("measure_mc needs at least 100 points")
    if bounds is None:
        bounds = default_bounds(ball_set)
    bounds = _check_bounds(ball_set, bounds)
    if rng is None:
        rng = np.random.default_rng(0)
    pts = bounds[:, 0] + rng.random((n_points, ball_set.d)) * (bounds[:, 1] - bounds[:, 0])
    box_vol = float(np.prod(bounds[:, 1] - bounds[:, 0]))
    frac = float(np.count_nonzero(contains_many(ball_set, pts))) / n_points
    est = frac * box_vol
    stderr = box_vol * math.sqrt(frac * (1.0 - frac) / n_points)
    return est, stderr


def measure_auto(
    ball_set: BallUnionSet,
    cells_per_dim: int = GRID_DEFAULT_CELLS,
    n_points: int = MC_DEFAULT_POINTS,
    rng: np.random.Generator | None = None,
) -> float:
    """Exact in 1-D, grid up to d = 3, Monte Carlo above."""
    if ball_set.is_infinite:
        return math.inf
    if ball_set.d == 1:
        return measure_1d(ball_set)
    if ball_set.d < 4 and cells_per_dim**ball_set.d <= MAX_GRID_CELLS:
        return measure_grid(ball_set, cells_per_dim=cells_per_dim)
    return measure_mc(ball_set, n_points=n_points, rng=rng)[0]
