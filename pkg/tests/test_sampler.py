import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from clipped_is.core import GaussianPrior, GmmParams, ParameterError, sample_observations, sample_prior
from clipped_is.sampler import (
    DegenerateWeightsError,
    FixedClip,
    LogClip,
    ParticleSet,
    clip_log_weights,
    compute_log_weights,
    normalize_weights,
    resolve_clip_count,
    run_is,
    run_nis,
)

PAPER = GmmParams()
PRIOR = GaussianPrior()


def sort_clip_oracle(lw, m_t):
    """Full sort, overwrite the top m_t entries with the m_t-th largest, unsort."""
    lw = np.asarray(lw, dtype=float)
    order = np.argsort(-lw, kind="stable")
    ranked = lw[order].copy()
    ranked[:m_t] = ranked[m_t - 1]
    out = np.empty_like(lw)
    out[order] = ranked
    return out


def fsum_log_likelihood(x, y, params):
    """Per-observation mixture log-density in 30-digit arithmetic, summed exactly."""
    with mpmath.workdps(30):
        terms = []
        for yn in y:
            s = mpmath.mpf(0)
            for a, m in zip(params.weights, x):
                d = mpmath.mpf(yn) - mpmath.mpf(m)
                s += mpmath.mpf(a) * mpmath.exp(-d * d / (2 * params.variance))
            terms.append(float(mpmath.log(s) - mpmath.log(2 * mpmath.pi * params.variance) / 2))
    return math.fsum(terms)


log_weight_vectors = hnp.arrays(
    np.float64,
    st.integers(2, 60),
    elements=st.floats(-1e3, 1e3),
)


class TestComputeLogWeights:
    def test_single_observation(self):
        from clipped_is.core import gmm_log_density

        x = np.array([[0.3, -1.0, 5.0], [0.0, 2.0, 4.0]])
        lw = compute_log_weights(x, [1.7], PAPER)
        for i in range(2):
            assert lw[i] == pytest.approx(gmm_log_density(1.7, x[i], PAPER), rel=1e-14)

    def test_repeated_observation_doubles(self):
        x = sample_prior(PRIOR, 50, np.random.default_rng(0))
        one = compute_log_weights(x, [0.4], PAPER)
        two = compute_log_weights(x, [0.4, 0.4], PAPER)
        np.testing.assert_allclose(two, 2 * one, rtol=1e-15)

    def test_paper_scale_against_oracle(self):
        y = sample_observations(PAPER, 1000, np.random.default_rng(5))
        x = np.array([[0.0, 2.0, 4.0], [10.0, 10.0, 10.0]])
        lw = compute_log_weights(x, y, PAPER)
        assert lw[0] > lw[1]
        for i in range(2):
            assert lw[i] == pytest.approx(fsum_log_likelihood(x[i], y, PAPER), rel=1e-10)

    def test_rows_are_independent_of_blocking(self):
        y = sample_observations(PAPER, 300, np.random.default_rng(8))
        x = sample_prior(PRIOR, 257, np.random.default_rng(9))
        full = compute_log_weights(x, y, PAPER)
        for k in (1, 31, 33, 100):
            assert np.array_equal(compute_log_weights(x[:k], y, PAPER), full[:k])

    def test_no_underflow_far_from_data(self):
        y = sample_observations(PAPER, 1000, np.random.default_rng(5))
        lw = compute_log_weights(np.array([[100.0, 100.0, 100.0]]), y, PAPER)
        assert np.isfinite(lw[0]) and lw[0] < -1e6

    def test_empty_observations(self):
        with pytest.raises(ParameterError):
            compute_log_weights(np.zeros((2, 3)), [], PAPER)

    def test_bad_sample_shape(self):
        with pytest.raises(ParameterError):
            compute_log_weights(np.zeros((2, 2)), [0.0], PAPER)


class TestResolveClipCount:
    @pytest.mark.parametrize("policy,m,expected", [
        (LogClip(), 1000, 7),
        (LogClip(), 100, 5),
        (LogClip(), 500, 6),
        (LogClip(), 10000, 9),
        (LogClip(), 2, 1),
        (LogClip(10.0), 1000, 3),
        (FixedClip(1), 500, 1),
        (FixedClip(10**6), 500, 499),
        (FixedClip(7), 1000, 7),
    ])
    def test_values(self, policy, m, expected):
        assert resolve_clip_count(policy, m) == expected

    def test_small_sample(self):
        with pytest.raises(ParameterError):
            resolve_clip_count(LogClip(), 1)

    @pytest.mark.parametrize("bad", [0, -3, 2.5])
    def test_invalid_fixed(self, bad):
        with pytest.raises(ParameterError):
            FixedClip(bad)

    def test_invalid_base(self):
        with pytest.raises(ParameterError):
            LogClip(1.0)


class TestClipLogWeights:
    def test_example(self):
        out = clip_log_weights(np.log([5.0, 3.0, 2.0, 1.0]), 2)
        np.testing.assert_allclose(np.exp(out), [3, 3, 2, 1], rtol=1e-15)

    def test_index_positions_kept(self):
        out = clip_log_weights(np.log([1.0, 5.0, 2.0, 3.0]), 2)
        np.testing.assert_allclose(np.exp(out), [1, 3, 2, 3], rtol=1e-15)

    def test_identity_at_one(self):
        lw = np.random.default_rng(0).normal(size=50) * 100
        assert np.array_equal(clip_log_weights(lw, 1), lw)

    def test_random_against_sort_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            m = int(rng.integers(3, 200))
            lw = rng.normal(size=m) * rng.uniform(0.1, 100)
            m_t = int(rng.integers(2, m))
            assert np.array_equal(clip_log_weights(lw, m_t), sort_clip_oracle(lw, m_t))

    def test_ties_at_threshold(self):
        lw = np.array([0.0, 2.0, 2.0, 2.0, 1.0, 2.0])
        for m_t in range(1, 6):
            assert np.array_equal(clip_log_weights(lw, m_t), sort_clip_oracle(lw, m_t))

    def test_handles_minus_inf(self):
        lw = np.array([-np.inf, 0.0, 3.0, -np.inf])
        np.testing.assert_array_equal(clip_log_weights(lw, 2), [-np.inf, 0.0, 0.0, -np.inf])

    @pytest.mark.parametrize("m_t", [0, 4, 10])
    def test_out_of_range(self, m_t):
        with pytest.raises(ParameterError):
            clip_log_weights(np.zeros(4), m_t)

    @settings(max_examples=300, deadline=None)
    @given(log_weight_vectors, st.data())
    def test_properties(self, lw, data):
        m_t = data.draw(st.integers(1, lw.size - 1))
        out = clip_log_weights(lw, m_t)
        assert np.array_equal(out, sort_clip_oracle(lw, m_t))
        assert np.array_equal(clip_log_weights(out, m_t), out)
        # pointwise monotone with a common threshold
        order = np.argsort(lw)
        assert np.all(np.diff(out[order]) >= 0)
        assert np.all(out <= lw)

    @settings(max_examples=300, deadline=None)
    @given(log_weight_vectors, st.data())
    def test_weight_bounds(self, lw, data):
        m_t = data.draw(st.integers(1, lw.size - 1))
        w = normalize_weights(lw)
        wt = normalize_weights(clip_log_weights(lw, m_t))
        assert wt.max() <= 1.0 / m_t + 1e-12
        assert wt.max() <= w.max() + 1e-12
        assert 1 / np.dot(wt, wt) >= (1 / np.dot(w, w)) * (1 - 1e-12)


class TestNormalizeWeights:
    def test_equal(self):
        np.testing.assert_allclose(normalize_weights([math.log(2)] * 2), [0.5, 0.5], atol=1e-15)

    def test_uniform(self):
        np.testing.assert_allclose(normalize_weights(np.zeros(37)), np.full(37, 1 / 37), rtol=1e-14)

    def test_extreme_values(self):
        lw = np.array([-10000.0, -10001.0])
        assert np.all(np.exp(lw) == 0)  # naive exponentiation underflows
        shifted = np.exp(lw + 10000.5)
        oracle = shifted / shifted.sum()
        np.testing.assert_allclose(normalize_weights(lw), oracle, rtol=1e-14)
        np.testing.assert_allclose(normalize_weights(lw), [0.7310585786300049, 0.2689414213699951],
                                   rtol=1e-14)

    def test_partial_minus_inf(self):
        np.testing.assert_array_equal(normalize_weights([-np.inf, 0.0, -np.inf]), [0, 1, 0])

    def test_total_degeneracy(self):
        with pytest.raises(DegenerateWeightsError):
            normalize_weights([-np.inf, -np.inf])

    @pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 0.0], []])
    def test_invalid(self, bad):
        with pytest.raises(ParameterError):
            normalize_weights(bad)

    @settings(max_examples=300, deadline=None)
    @given(log_weight_vectors, st.floats(-1e4, 1e4))
    def test_sum_and_shift_invariance(self, lw, c):
        w = normalize_weights(lw)
        assert abs(w.sum() - 1.0) <= 1e-12
        assert np.all((w >= 0) & (w <= 1))
        np.testing.assert_allclose(normalize_weights(lw + c), w, rtol=0, atol=1e-12)


class TestRunners:
    def setup_method(self):
        self.y = sample_observations(PAPER, 1000, np.random.default_rng(21))
        self.x = sample_prior(PRIOR, 100, np.random.default_rng(22))

    def test_fixed_one_is_plain_is(self):
        a = run_is(self.x, self.y, PAPER)
        b = run_nis(self.x, self.y, PAPER, FixedClip(1))
        assert np.array_equal(a.weights, b.weights)
        assert a.method == "IS" and b.method == "NIS" and b.clip_count == 1

    def test_two_samples(self):
        x = np.array([[0.0, 2.0, 4.0], [1.0, 1.0, 1.0]])
        y = [0.5]
        ps = run_nis(x, y, PAPER, FixedClip(1))
        from clipped_is.core import gmm_log_density

        l0, l1 = (gmm_log_density(0.5, xi, PAPER) for xi in x)
        w0 = 1 / (1 + math.exp(l1 - l0))
        np.testing.assert_allclose(ps.weights, [w0, 1 - w0], rtol=1e-14)

    def test_max_weight_bound_paper_setting(self):
        for seed in range(5):
            x = sample_prior(PRIOR, 100, np.random.default_rng(seed))
            ps = run_nis(x, self.y, PAPER, LogClip())
            assert ps.clip_count == 5
            assert ps.weights.max() <= 1 / 5 + 1e-12

    def test_particle_set_is_immutable(self):
        ps = run_is(self.x, self.y, PAPER)
        with pytest.raises(ValueError):
            ps.weights[0] = 1.0

    def test_particle_set_lengths(self):
        with pytest.raises(ParameterError):
            ParticleSet(np.zeros((2, 3)), np.zeros(3), np.full(2, 0.5))
