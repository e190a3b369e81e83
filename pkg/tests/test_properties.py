import math

import numpy as np
from hypothesis import given, settings, strategies as st

from pcp.calibrate import calibrated_radius, empirical_quantile, scores_from_arrays
from pcp.core import NormKind, QuantileMode, distance
from pcp.geometry import union_length_1d

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


def vectors(dim):
    return st.lists(finite_floats, min_size=dim, max_size=dim).map(np.asarray)


@st.composite
def triples(draw, dim=3):
    return tuple(draw(vectors(dim)) for _ in range(3))


@given(triples(), st.sampled_from(list(NormKind)))
@settings(max_examples=300)
def test_metric_axioms(tri, norm):
    a, b, c = tri
    assert distance(a, a, norm) == 0.0
    assert distance(a, b, norm) == distance(b, a, norm)
    assert distance(a, b, norm) >= 0.0
    lhs = distance(a, c, norm)
    rhs = distance(a, b, norm) + distance(b, c, norm)
    assert lhs <= rhs + 1e-7 * (1.0 + rhs)


@given(
    st.lists(finite_floats, min_size=1, max_size=50),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_quantile_monotone_in_level(z, l1, l2):
    lo, hi = min(l1, l2), max(l1, l2)
    assert empirical_quantile(z, lo) <= empirical_quantile(z, hi)


@given(st.lists(finite_floats, min_size=1, max_size=50))
def test_quantile_extremes(z):
    assert empirical_quantile(z, 1.0) == max(z)
    assert empirical_quantile(z, 0.0) == min(z)
    n = len(z)
    # any level in (0, 1/n] still selects the minimum
    assert empirical_quantile(z, 1.0 / n) == min(z)


@given(
    st.lists(st.floats(min_value=0.0, max_value=1e5), min_size=2, max_size=60),
    st.floats(min_value=0.05, max_value=0.5),
    st.floats(min_value=0.1, max_value=100.0),
)
def test_radius_scale_equivariance(scores, alpha, c):
    scores = np.asarray(scores)
    for mode in (QuantileMode.PLAIN, QuantileMode.INFLATED):
        base = calibrated_radius(scores, alpha, mode)
        scaled = calibrated_radius(c * scores, alpha, mode)
        if math.isinf(base):
            assert math.isinf(scaled)
        else:
            assert scaled == c * base


@given(st.data())
@settings(max_examples=100)
def test_scores_nonincreasing_in_k(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31 - 1)))
    n, kmax, d = 5, 8, 2
    ys = rng.standard_normal((n, d))
    samples = rng.standard_normal((n, kmax, d))
    prev = None
    for k in range(1, kmax + 1):
        cur = scores_from_arrays(ys, samples[:, :k], NormKind.L2)
        if prev is not None:
            assert np.all(cur <= prev)
        prev = cur


@given(st.data())
@settings(max_examples=100)
def test_union_length_bounds(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31 - 1)))
    k = data.draw(st.integers(1, 15))
    centers = rng.standard_normal(k) * 5
    radius = data.draw(st.floats(min_value=1e-3, max_value=3.0))
    total = union_length_1d(centers, radius)
    assert 2 * radius - 1e-12 <= total <= 2 * radius * k + 1e-9
    bigger = union_length_1d(centers, radius * 1.5)
    assert bigger >= total - 1e-12


def test_quantile_lemma_frequency():
    # rank argument: for iid continuous scores, P(new <= inflated beta
    # quantile of n) lies in [beta, beta + 1/(n+1)]
    n = 49
    trials = 20000
    rng = np.random.default_rng(0)
    z = rng.random((trials, n + 1))
    sorted_cal = np.sort(z[:, :n], axis=1)
    new = z[:, n]
    for beta in (0.5, 0.8, 0.9):
        k = int(math.ceil((n + 1) * beta))
        q = sorted_cal[:, k - 1] if k <= n else np.inf
        freq = float(np.mean(new <= q))
        assert beta - 0.01 <= freq <= beta + 1.0 / (n + 1) + 0.01
