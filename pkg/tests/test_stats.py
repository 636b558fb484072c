import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from proxycal.stats import (
    Histogram, InsufficientDataError, align_histograms, build_histogram, kl_divergence,
    kolmogorov_sf, ks_two_sample, mean_var, smoothed_probabilities,
)

from conftest import ecdf_sweep_dint, permutation_pvalue

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
small_ints = st.integers(0, 6)  # heavy ties


# mean_var ------------------------------------------------------------------

@pytest.mark.parametrize("sample,expected", [
    ([5, 5, 5], (5.0, 0.0)),
    ([1, 2, 3], (2.0, 1.0)),
    ([2, 4, 6], (4.0, 4.0)),
])
def test_mean_var_hand_values(sample, expected):
    assert mean_var(sample) == expected


def test_mean_var_ignores_missing_and_needs_two():
    assert mean_var([1, np.nan, 3]) == (2.0, 2.0)
    with pytest.raises(InsufficientDataError):
        mean_var([4.0, np.nan])


@given(st.lists(finite, min_size=2, max_size=50), st.floats(0.01, 100), finite)
def test_mean_var_linearity(xs, c, k):
    x = np.array(xs)
    m, v = mean_var(x)
    m2, v2 = mean_var(c * x + k)
    scale = max(abs(c * m) + abs(k), 1.0)
    assert abs(m2 - (c * m + k)) <= 1e-9 * scale
    if v > 0:
        assert v2 == pytest.approx(c * c * v, rel=1e-9, abs=1e-9 * scale ** 2)


# KS ------------------------------------------------------------------------

def test_ks_identical_samples():
    x = np.random.default_rng(0).normal(size=40)
    r = ks_two_sample(x, x)
    assert r.d_stat == 0.0 and r.p_value == 1.0


def test_ks_large_separation():
    rng = np.random.default_rng(1)
    a, b = rng.normal(20, 5, 500), rng.normal(30, 5, 500)
    r = ks_two_sample(a, b)
    assert r.d_stat * 500 * 500 == ecdf_sweep_dint(list(a), list(b))
    assert r.p_value < 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_ks_six_by_six_matches_permutation(seed):
    rng = np.random.default_rng(seed)
    a = np.round(rng.normal(0, 1, 6), 1)
    b = np.round(rng.normal(0.7, 1, 6), 1)
    assert ks_two_sample(a, b).p_value == pytest.approx(permutation_pvalue(a, b), abs=1e-6)


def test_ks_permutation_with_heavy_ties():
    a, b = [1, 1, 2, 2, 3], [1, 2, 2, 3, 3, 3, 4]
    assert ks_two_sample(a, b).p_value == pytest.approx(permutation_pvalue(a, b), abs=1e-6)


def test_ks_asymptotic_matches_kolmogorov_reference():
    x = np.concatenate([np.linspace(0.05, 3, 60), [0.2, 0.5, 0.9, 0.99, 1.0, 1.01, 2.5]])
    assert np.allclose(kolmogorov_sf(x), special.kolmogorov(x), atol=1e-10)
    assert kolmogorov_sf(0.0) == 1.0


def test_ks_needs_non_empty_samples():
    with pytest.raises(InsufficientDataError):
        ks_two_sample([], [1.0])
    with pytest.raises(InsufficientDataError):
        ks_two_sample([np.nan], [1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(small_ints, min_size=1, max_size=30), st.lists(small_ints, min_size=1, max_size=30))
def test_ks_symmetric(a, b):
    r1, r2 = ks_two_sample(a, b), ks_two_sample(b, a)
    assert r1.d_stat == r2.d_stat
    assert r1.p_value == pytest.approx(r2.p_value, rel=1e-12, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30),
       st.lists(st.floats(-5, 5), min_size=1, max_size=30))
def test_ks_invariant_under_increasing_transform(a, b):
    a, b = np.array(a), np.array(b)
    r1 = ks_two_sample(a, b)
    r2 = ks_two_sample(np.exp(a) * 3 + 1, np.exp(b) * 3 + 1)
    # exp may merge values that differ by less than float resolution, so
    # compare only when the transform preserved all distinctions
    if len(np.unique(np.concatenate([a, b]))) == len(np.unique(np.exp(np.concatenate([a, b])) * 3 + 1)):
        assert r1.d_stat == r2.d_stat
        assert r1.p_value == pytest.approx(r2.p_value, rel=1e-12, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(small_ints, min_size=1, max_size=7), st.lists(small_ints, min_size=1, max_size=7))
def test_ks_small_samples_match_permutation(a, b):
    assert ks_two_sample(a, b).p_value == pytest.approx(permutation_pvalue(a, b), abs=1e-6)


# histograms and KL -----------------------------------------------------------

def test_histogram_direct_binning():
    h = build_histogram([0.5, 1.5, 1.6], 1.0, 0.0)
    assert list(h.counts) == [1, 2] and h.origin == 0.0


def test_histogram_constant_sample():
    h = build_histogram([7.0] * 100)
    assert list(h.counts) == [100] and h.origin == 7.0


def test_histogram_uniform_law_of_large_numbers():
    x = np.random.default_rng(3).uniform(0, 10, 1_000_000)
    h = build_histogram(x, 1.0, 0.0)
    assert len(h.counts) == 10
    assert np.all(np.abs(h.probabilities - 0.1) < 0.005)
    assert abs(h.probabilities.sum() - 1) < 1e-12


def test_histogram_rejects_bad_input():
    with pytest.raises(ValueError):
        build_histogram([1.0], 0.0)
    with pytest.raises(InsufficientDataError):
        build_histogram([np.nan])
    with pytest.raises(ValueError):
        Histogram(1.0, 0.0, np.array([1, 2]), 4)


def test_align_histograms_union_grid():
    p = build_histogram([0.5, 1.5])
    q = build_histogram([3.5])
    pc, qc = align_histograms(p, q)
    assert list(pc) == [1, 1, 0, 0] and list(qc) == [0, 0, 0, 1]
    with pytest.raises(ValueError):
        align_histograms(p, build_histogram([1.0], 2.0))
    with pytest.raises(ValueError):
        align_histograms(p, build_histogram([1.0], 1.0, 0.5))


def test_kl_identical_is_zero():
    h = build_histogram(np.random.default_rng(4).gamma(3, 5, 2000))
    assert abs(kl_divergence(h, h)) < 1e-12


def test_kl_point_mass_vs_uniform_limit():
    p = Histogram(1.0, 0.0, np.array([10] + [0] * 9), 10)
    q = Histogram(1.0, 0.0, np.ones(10, dtype=np.int64), 10)
    assert kl_divergence(p, q, eps=0) == pytest.approx(math.log(10), abs=1e-12)
    # smoothed value approaches the closed form as eps shrinks
    errs = [abs(kl_divergence(p, q, eps=e) - math.log(10)) for e in (1e-2, 1e-4, 1e-6)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-3


def test_kl_default_smoothing_keeps_empty_bins_finite():
    p = build_histogram([0.5, 0.5, 5.5])
    q = build_histogram([0.5, 1.5])
    assert math.isfinite(kl_divergence(p, q))
    assert kl_divergence(p, q, eps=0) == math.inf


def test_smoothed_probabilities_pseudocount():
    c = np.array([3, 0, 7])
    assert np.allclose(smoothed_probabilities(c), (c + 0.1) / (10 + 0.3))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0, 40), min_size=1, max_size=80),
       st.lists(st.floats(0, 40), min_size=1, max_size=80),
       st.sampled_from([0.5, 1.0, 2.0]))
def test_kl_non_negative_and_self_zero(a, b, width):
    p, q = build_histogram(a, width), build_histogram(b, width)
    assert kl_divergence(p, q) >= 0
    assert abs(kl_divergence(p, p)) < 1e-12
