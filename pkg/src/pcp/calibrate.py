"""Nonconformity scores and the empirical-quantile variants that produce
the calibrated radius."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CapabilityError,
    ConfigurationError,
    DataError,
    NormKind,
    PcpConfig,
    QuantileMode,
    SampleBatch,
    _norms,
    distances_to,
)

_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class ScoreVector:
    """Nonnegative calibration scores, one per calibration point."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 1 or scores.size < 1:
            raise DataError("scores must be a nonempty vector")
        if not np.all(np.isfinite(scores)) or np.any(scores < 0):
            raise DataError("scores must be finite and nonnegative")
        scores = scores.copy()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return self.scores.size

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["score"])
            for s in self.scores:
                writer.writerow([repr(float(s))])


def score(y, batch: SampleBatch, norm: NormKind = NormKind.L2) -> float:
    """Minimum distance from the observed target to the sampled candidates."""
    if batch.k < 1:
        raise DataError("sample batch is empty")
    return float(np.min(distances_to(y, batch.samples, norm)))


def scores_from_arrays(ys: np.ndarray, samples: np.ndarray, norm: NormKind) -> np.ndarray:
    """Vectorized min-distance scores: ys (n, d) against samples (n, k, d)."""
    return np.min(_norms(samples - ys[:, None, :], norm), axis=1)


def _order_stat_index(n: int, level: float) -> int:
    """1-indexed order statistic picked by the empirical quantile at level."""
    if not 0.0 <= level <= 1.0 + _CEIL_EPS:
        raise ConfigurationError(f"quantile level must lie in [0, 1], got {level}")
    return max(1, int(math.ceil(n * level - _CEIL_EPS)))


def empirical_quantile(z, level: float) -> float:
    """Smallest value x with (#{z_i <= x})/n >= level; the ceil(n*level)-th
    smallest entry, with level 0 mapping to the minimum."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise DataError("quantile of an empty sequence")
    k = _order_stat_index(z.size, level)
    return float(np.sort(z)[k - 1])


def resolve_quantile_mode(mode: QuantileMode | None, alpha: float, n: int) -> QuantileMode:
    """Default rule: corrected keeps a finite radius whenever it is valid."""
    if mode is not None:
        return mode
    return QuantileMode.CORRECTED if alpha >= 1.0 / (n + 1) else QuantileMode.INFLATED


def calibrated_radius(scores: ScoreVector | np.ndarray, alpha: float, mode: QuantileMode) -> float:
    """Radius from calibration scores under one of the quantile variants.

    Inflated appends an infinite sentinel and may return math.inf; corrected
    requires alpha >= 1/(n+1) and always returns a finite radius.
    """
    arr = scores.scores if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise DataError("no calibration scores")
    n = arr.size
    if mode is QuantileMode.INFLATED:
        k = _order_stat_index(n + 1, 1.0 - alpha)
        if k == n + 1:
            return math.inf
        return float(np.sort(arr)[k - 1])
    if mode is QuantileMode.PLAIN:
        return empirical_quantile(arr, 1.0 - alpha)
    if mode is QuantileMode.CORRECTED:
        if alpha < 1.0 / (n + 1):
            raise ConfigurationError(
                f"corrected mode requires alpha >= 1/(n+1) = {1.0 / (n + 1):.6g}"
            )
        return empirical_quantile(arr, (1.0 - alpha) * (1.0 + 1.0 / n))
    raise ConfigurationError(f"unknown quantile mode {mode!r}")


def compute_scores(
    backbone,
    x_cal: np.ndarray,
    y_cal: np.ndarray,
    config: PcpConfig,
    rng: np.random.Generator,
    beta: float = 0.0,
) -> ScoreVector:
    """One score per calibration point from an independent size-K batch.

    With beta > 0 each point draws ceil(K / (1 - beta)) samples and keeps the
    K of highest density before scoring (requires an explicit backbone).
    """
    from .predict import filter_many, oversample_count

    x_cal = np.atleast_2d(np.asarray(x_cal, dtype=float))
    y_cal = np.atleast_2d(np.asarray(y_cal, dtype=float))
    if x_cal.shape[0] == 0:
        raise DataError("calibration slice is empty")
    k = config.k_samples
    if beta > 0 and not backbone.has_density:
        raise CapabilityError("density filtering requires an explicit backbone")
    m = oversample_count(k, beta)
    samples, dens = backbone.sample_many(x_cal, m, rng)
    if beta > 0:
        samples = filter_many(samples, dens, k)
    return ScoreVector(scores_from_arrays(y_cal, samples, config.norm))
