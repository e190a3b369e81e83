"""Ball-union predictive sets: sample-based calibration, prediction, and
the density-filtered variant with filter-fraction selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibrate import (
    ScoreVector,
    calibrated_radius,
    resolve_quantile_mode,
    scores_from_arrays,
)
from .core import (
    BallUnionSet,
    CalibratedPredictor,
    CapabilityError,
    ConfigurationError,
    DataError,
    LabeledDataset,
    PcpConfig,
    SampleBatch,
    _norms,
)
from .geometry import union_length_1d

DEFAULT_BETA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
SELECT_MC_POINTS = 512


@dataclass(frozen=True)
class BetaGrid:
    """Strictly increasing candidate filter fractions in [0, 1)."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigurationError("beta grid is empty")
        if any(not 0.0 <= v < 1.0 for v in vals):
            raise ConfigurationError("beta values must lie in [0, 1)")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("beta grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @property
    def max_beta(self) -> float:
        return self.values[-1]


def oversample_count(k: int, beta: float) -> int:
    """Batch size needed so that a (1 - beta) fraction keeps K samples."""
    if not 0.0 <= beta < 1.0:
        raise ConfigurationError(f"beta must lie in [0, 1), got {beta}")
    return int(math.ceil(k / (1.0 - beta)))


def hdpcp_filter(batch: SampleBatch, beta: float, k: int) -> SampleBatch:
    """Keep the K highest-density samples of an oversampled batch.

    Ties broken by original sample index (lower index kept); original sample
    order is preserved in the output.
    """
    if batch.densities is None:
        raise CapabilityError("filtering requires densities on the batch")
    expected = oversample_count(k, beta)
    if batch.k != expected:
        raise DataError(
            f"batch size {batch.k} does not match ceil(K/(1-beta)) = {expected}"
        )
    keep = _keep_indices(batch.densities, k)
    return SampleBatch(batch.samples[keep], batch.densities[keep])


def _keep_indices(densities: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-np.asarray(densities), kind="stable")[:k]
    return np.sort(order)


def filter_many(samples: np.ndarray, densities: np.ndarray, k: int) -> np.ndarray:
    """Vectorized top-K density filter over (n, m, d) batches."""
    order = np.argsort(-densities, axis=1, kind="stable")[:, :k]
    order = np.sort(order, axis=1)
    n = samples.shape[0]
    return samples[np.arange(n)[:, None], order]


def _cal_fold(dataset: LabeledDataset):
    x_cal, y_cal = dataset.fold("cal")
    if x_cal.shape[0] == 0:
        raise DataError("calibration fold is empty")
    return x_cal, y_cal


def pcp_calibrate(backbone, dataset: LabeledDataset, config: PcpConfig) -> CalibratedPredictor:
    """Radius calibration from fresh size-K batches on the calibration fold."""
    x_cal, y_cal = _cal_fold(dataset)
    rng = np.random.default_rng(config.seed)
    samples, _ = backbone.sample_many(x_cal, config.k_samples, rng)
    scores = scores_from_arrays(y_cal, samples, config.norm)
    mode = resolve_quantile_mode(config.quantile_mode, config.alpha, scores.size)
    radius = calibrated_radius(scores, config.alpha, mode)
    return CalibratedPredictor(
        backbone=backbone,
        radius=radius,
        config=config,
        n_cal=scores.size,
        cal_scores=scores,
        selected_beta=None,
        quantile_mode=mode,
    )


def pcp_predict(predictor: CalibratedPredictor, x, rng: np.random.Generator) -> BallUnionSet:
    """Predictive set at one covariate: K fresh samples as ball centers."""
    sets = predict_many(predictor, np.asarray(x, dtype=float)[None, :], rng)
    return sets[0]


def predict_many(
    predictor: CalibratedPredictor, xs: np.ndarray, rng: np.random.Generator
) -> list[BallUnionSet]:
    """Predictive sets for many covariates with one sampling pass."""
    config = predictor.config
    beta = predictor.selected_beta or 0.0
    k = config.k_samples
    m = oversample_count(k, beta)
    samples, dens = predictor.backbone.sample_many(np.atleast_2d(xs), m, rng)
    if beta > 0:
        samples = filter_many(samples, dens, k)
    return [
        BallUnionSet(centers, predictor.radius, config.norm) for centers in samples
    ]


def _beta_objective(
    x_cal, y_cal, samples_max, dens_max, grid: BetaGrid, config: PcpConfig, rng
):
    """Per-beta (total set measure, radius) over the calibration covariates."""
    k = config.k_samples
    n_cal, _, d = samples_max.shape
    shared_u = rng.random((SELECT_MC_POINTS, d)) if d > 1 else None
    totals, radii = [], []
    for beta in grid.values:
        m = oversample_count(k, beta)
        centers = filter_many(samples_max[:, :m], dens_max[:, :m], k)
        scores = scores_from_arrays(y_cal, centers, config.norm)
        mode = resolve_quantile_mode(config.quantile_mode, config.alpha, scores.size)
        radius = calibrated_radius(scores, config.alpha, mode)
        radii.append(radius)
        if math.isinf(radius):
            totals.append(math.inf)
            continue
        if d == 1:
            total = sum(union_length_1d(c[:, 0], radius) for c in centers)
        else:
            total = 0.0
            for c in centers:
                lo = c.min(axis=0) - radius
                hi = c.max(axis=0) + radius
                pts = lo + shared_u * (hi - lo)
                dists = _norms(pts[:, None, :] - c[None, :, :], config.norm)
                frac = np.count_nonzero(np.min(dists, axis=1) <= radius) / SELECT_MC_POINTS
                total += frac * float(np.prod(hi - lo))
        totals.append(total)
    return totals, radii


def hdpcp_select_beta(
    backbone, x_cal, y_cal, grid: BetaGrid | tuple, config: PcpConfig
) -> float:
    """Filter fraction minimizing the summed measure of the calibration-fold
    predictive sets; ties resolve to the smallest beta."""
    if not isinstance(grid, BetaGrid):
        grid = BetaGrid(tuple(grid))
    if not backbone.has_density:
        raise CapabilityError("filter selection requires an explicit backbone")
    rng = np.random.default_rng(config.seed)
    m_max = oversample_count(config.k_samples, grid.max_beta)
    samples_max, dens_max = backbone.sample_many(np.atleast_2d(x_cal), m_max, rng)
    totals, _ = _beta_objective(
        np.atleast_2d(x_cal), np.atleast_2d(y_cal), samples_max, dens_max, grid, config, rng
    )
    best = int(np.argmin(totals))
    return grid.values[best]


def hdpcp_calibrate(backbone, dataset: LabeledDataset, config: PcpConfig) -> CalibratedPredictor:
    """Density-filtered calibration: selects (or takes) the filter fraction,
    then calibrates the radius on filtered batches."""
    if not backbone.has_density:
        raise CapabilityError("density filtering requires an explicit backbone")
    x_cal, y_cal = _cal_fold(dataset)
    rng = np.random.default_rng(config.seed)

    if isinstance(config.beta, tuple):
        grid = BetaGrid(config.beta)
        if config.beta_fold == "val":
            x_sel, y_sel = dataset.fold("val")
            if x_sel.shape[0] == 0:
                raise DataError("beta selection on the validation fold needs val data")
        else:
            x_sel, y_sel = x_cal, y_cal
        m_max = oversample_count(config.k_samples, grid.max_beta)
        samples_max, dens_max = backbone.sample_many(x_sel, m_max, rng)
        totals, _ = _beta_objective(x_sel, y_sel, samples_max, dens_max, grid, config, rng)
        beta0 = grid.values[int(np.argmin(totals))]
        if config.beta_fold == "cal":
            # reuse the selection batches for the final radius
            m0 = oversample_count(config.k_samples, beta0)
            centers = filter_many(samples_max[:, :m0], dens_max[:, :m0], config.k_samples)
        else:
            m0 = oversample_count(config.k_samples, beta0)
            samples, dens = backbone.sample_many(x_cal, m0, rng)
            centers = filter_many(samples, dens, config.k_samples) if beta0 > 0 else samples
    else:
        beta0 = float(config.beta)
        m0 = oversample_count(config.k_samples, beta0)
        samples, dens = backbone.sample_many(x_cal, m0, rng)
        centers = filter_many(samples, dens, config.k_samples) if beta0 > 0 else samples

    scores = scores_from_arrays(y_cal, centers, config.norm)
    mode = resolve_quantile_mode(config.quantile_mode, config.alpha, scores.size)
    radius = calibrated_radius(scores, config.alpha, mode)
    return CalibratedPredictor(
        backbone=backbone,
        radius=radius,
        config=config,
        n_cal=scores.size,
        cal_scores=scores,
        selected_beta=beta0,
        quantile_mode=mode,
    )
