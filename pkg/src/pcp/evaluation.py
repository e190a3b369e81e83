"""Coverage and sharpness metrics: marginal coverage, worst-slab
conditional coverage, and set-size statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, DataError


@dataclass(frozen=True)
class WscConfig:
    """Knobs for the worst-slab conditional-coverage approximation."""

    delta: float = 0.1
    n_directions: int = 1000
    split_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.n_directions < 1:
            raise ConfigurationError("n_directions must be positive")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigurationError("split_fraction must lie in (0, 1)")


def marginal_coverage(contains_flags) -> float:
    """Mean of the per-point containment flags."""
    flags = np.asarray(contains_flags, dtype=bool)
    if flags.size == 0:
        raise DataError("no containment flags")
    return float(flags.mean())


def _worst_slab_on(proj: np.ndarray, flags: np.ndarray, min_count: int):
    """Lowest-coverage contiguous window of sorted projections; returns
    (coverage, lo, hi) in projection units."""
    order = np.argsort(proj, kind="stable")
    sp = proj[order]
    sf = flags[order].astype(float)
    n = sp.size
    cum = np.concatenate([[0.0], np.cumsum(sf)])
    idx = np.arange(n + 1)
    counts = idx[None, :] - idx[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        cov = (cum[None, :] - cum[:, None]) / counts
    cov[counts < min_count] = np.inf
    i, j = np.unravel_index(np.argmin(cov), cov.shape)
    return float(cov[i, j]), float(sp[i]), float(sp[j - 1])


def worst_slab_coverage(x_test, contains_flags, cfg: WscConfig) -> float:
    """Coverage of the worst delta-mass covariate slab, found on one data
    half and evaluated on the held-out half."""
    x_test = np.atleast_2d(np.asarray(x_test, dtype=float))
    flags = np.asarray(contains_flags, dtype=bool)
    n = x_test.shape[0]
    if n != flags.size:
        raise DataError("x_test and flags length mismatch")
    if n < 20:
        raise DataError("worst-slab coverage needs at least 20 test points")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_sel = int(n * cfg.split_fraction)
    sel, hold = perm[:n_sel], perm[n_sel:]
    min_count = max(2, int(math.ceil(cfg.delta * n_sel)))

    p = x_test.shape[1]
    dirs = rng.standard_normal((cfg.n_directions, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    best = None
    for v in dirs:
        proj = x_test[sel] @ v
        cov, lo, hi = _worst_slab_on(proj, flags[sel], min_count)
        if best is None or cov < best[0]:
            best = (cov, v, lo, hi)
    _, v, lo, hi = best
    proj_hold = x_test[hold] @ v
    mask = (proj_hold >= lo) & (proj_hold <= hi)
    if not np.any(mask):
        return 1.0
    return float(flags[hold][mask].mean())


def set_size_stats(measures) -> tuple[float, float]:
    """Mean and standard error of finite set sizes."""
    arr = np.asarray(measures, dtype=float)
    if arr.size == 0:
        raise DataError("no set sizes")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DataError("set sizes must be finite and nonnegative")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))


def bonferroni_level(alpha: float, d: int) -> float:
    """Per-dimension miscoverage alpha/d for the union-bound baseline."""
    if d < 1:
        raise ConfigurationError("d must be at least 1")
    return alpha / d
