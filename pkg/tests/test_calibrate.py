import math

import numpy as np
import pytest

from pcp.calibrate import (
    ScoreVector,
    calibrated_radius,
    compute_scores,
    empirical_quantile,
    resolve_quantile_mode,
    score,
    scores_from_arrays,
)
from pcp.core import (
    ConfigurationError,
    DataError,
    NormKind,
    PcpConfig,
    QuantileMode,
    SampleBatch,
)


class PointMassBackbone:
    """Deterministic backbone returning y = f(x) repeated K times."""

    has_density = False

    def __init__(self, fn, d=1):
        self.fn = fn
        self.d = d

    def sample_many(self, xs, k, rng):
        ys = np.stack([np.atleast_1d(self.fn(x)) for x in np.atleast_2d(xs)])
        return np.repeat(ys[:, None, :], k, axis=1), None


def test_score_min_distance_scalar():
    batch = SampleBatch(np.array([[1.0], [5.0], [3.5]]))
    assert score(np.array([3.0]), batch) == 0.5


def test_score_exact_match_zero():
    batch = SampleBatch(np.array([[1.0], [2.0]]))
    assert score(np.array([2.0]), batch) == 0.0


def test_score_l2_two_candidates():
    batch = SampleBatch(np.array([[3.0, 4.0], [1.0, 1.0]]))
    assert score(np.array([0.0, 0.0]), batch) == pytest.approx(math.sqrt(2), abs=1e-9)


def test_scores_from_arrays_matches_loop():
    rng = np.random.default_rng(0)
    ys = rng.standard_normal((7, 3))
    samples = rng.standard_normal((7, 5, 3))
    fast = scores_from_arrays(ys, samples, NormKind.L2)
    slow = np.array(
        [score(ys[i], SampleBatch(samples[i]), NormKind.L2) for i in range(7)]
    )
    assert np.allclose(fast, slow)


def test_empirical_quantile_examples():
    assert empirical_quantile([1.0, 2.0, 3.0, 4.0], 0.5) == 2.0
    assert empirical_quantile([5.0], 1.0) == 5.0
    assert empirical_quantile([3.0, 1.0, 2.0], 0.0) == 1.0


def test_empirical_quantile_empty():
    with pytest.raises(DataError):
        empirical_quantile([], 0.5)


def test_inflated_radius_hits_highest_finite():
    # with 9 finite scores and the appended sentinel, level 0.9 lands on
    # the 9th smallest of 10, the largest finite score
    scores = np.arange(1.0, 10.0)
    assert calibrated_radius(scores, 0.1, QuantileMode.INFLATED) == 9.0


def test_inflated_radius_example_99():
    scores = np.arange(1.0, 100.0)
    assert calibrated_radius(scores, 0.1, QuantileMode.INFLATED) == 90.0


def test_inflated_radius_sentinel():
    # ceil(10 * 0.95) = 10 = n + 1 selects the sentinel
    scores = np.arange(1.0, 10.0)
    assert math.isinf(calibrated_radius(scores, 0.05, QuantileMode.INFLATED))


def test_corrected_radius_example_99():
    # level (1 - 0.1) * (1 + 1/99) = 90/99, ceil(99 * 90/99) = 90
    scores = np.arange(1.0, 100.0)
    assert calibrated_radius(scores, 0.1, QuantileMode.CORRECTED) == 90.0


def test_plain_radius():
    scores = np.arange(1.0, 100.0)
    assert calibrated_radius(scores, 0.1, QuantileMode.PLAIN) == 90.0
    assert calibrated_radius(np.arange(1.0, 11.0), 0.25, QuantileMode.PLAIN) == 8.0


def test_corrected_requires_alpha_floor():
    with pytest.raises(ConfigurationError):
        calibrated_radius(np.arange(1.0, 10.0), 0.05, QuantileMode.CORRECTED)


def test_inflated_vs_corrected_agree_when_finite():
    # whenever the inflated quantile is finite the two pick the same order
    # statistic: ceil((n+1)(1-a)) = ceil(n (1-a)(1+1/n))
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 120))
        alpha = float(rng.uniform(1.0 / (n + 1), 0.8))
        scores = np.sort(rng.random(n))
        inf_r = calibrated_radius(scores, alpha, QuantileMode.INFLATED)
        if math.isinf(inf_r):
            continue
        cor_r = calibrated_radius(scores, alpha, QuantileMode.CORRECTED)
        assert inf_r == cor_r


def test_resolve_quantile_mode_default_rule():
    assert resolve_quantile_mode(None, 0.1, 99) is QuantileMode.CORRECTED
    assert resolve_quantile_mode(None, 0.005, 99) is QuantileMode.INFLATED
    assert resolve_quantile_mode(QuantileMode.PLAIN, 0.005, 99) is QuantileMode.PLAIN


def test_score_vector_rejects_bad_entries():
    with pytest.raises(DataError):
        ScoreVector(np.array([-1.0]))
    with pytest.raises(DataError):
        ScoreVector(np.array([np.inf]))
    with pytest.raises(DataError):
        ScoreVector(np.array([]))


def test_score_vector_csv(tmp_path):
    sv = ScoreVector(np.array([0.25, 1.5]))
    path = tmp_path / "scores.csv"
    sv.to_csv(path)
    assert path.read_text().splitlines() == ["score", "0.25", "1.5"]


def test_compute_scores_point_mass_zero():
    backbone = PointMassBackbone(lambda x: x[0] * 2.0)
    x = np.linspace(-1, 1, 10)[:, None]
    y = 2.0 * x
    sv = compute_scores(backbone, x, y, PcpConfig(), np.random.default_rng(0))
    assert np.all(sv.scores == 0.0)


def test_compute_scores_constant_shift():
    backbone = PointMassBackbone(lambda x: x[0] + 3.0)
    x = np.linspace(-1, 1, 10)[:, None]
    y = x.copy()
    sv = compute_scores(backbone, x, y, PcpConfig(), np.random.default_rng(0))
    assert np.allclose(sv.scores, 3.0)


def test_scores_stochastically_smaller_with_more_samples():
    rng = np.random.default_rng(5)
    n = 500
    ys = rng.standard_normal((n, 1))
    draws = rng.standard_normal((n, 100, 1))
    small = scores_from_arrays(ys, draws[:, :1], NormKind.L2)
    big = scores_from_arrays(ys, draws, NormKind.L2)
    assert np.all(big <= small)
    assert big.mean() < small.mean()
