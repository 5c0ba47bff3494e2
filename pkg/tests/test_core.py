import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from nonlinear_assim.core import (
    GaussianBelief,
    ModelDims,
    NoiseSpec,
    ObservationSelector,
    RngStream,
    TimeSeries,
    batch_cholesky_psd,
    cholesky_psd,
    gaussian_draw,
    perturb_observations,
    symmetrize,
)
from nonlinear_assim.errors import NotFactorizable


class TestCholesky:
    def test_identity(self):
        S, eps = cholesky_psd(np.eye(2))
        assert_array_equal(S, np.eye(2))
        assert eps == 0.0

    def test_scalar(self):
        assert_allclose(cholesky_psd([[4.0]])[0], [[2.0]])

    def test_scaled_unit_variance(self):
        # (L + lambda) P with L = 1, alpha = 0.6, kappa = 0, P = 1
        assert_allclose(cholesky_psd([[0.36]])[0], [[0.6]], rtol=1e-15)

    def test_zero_matrix_factors_without_jitter(self):
        S, eps = cholesky_psd(np.zeros((3, 3)))
        assert_array_equal(S, 0.0)
        assert eps == 0.0

    def test_rank_deficient(self):
        v = np.array([[1.0], [2.0], [-1.0]])
        m = v @ v.T
        S, eps = cholesky_psd(m)
        assert_allclose(S @ S.T, m + eps * np.eye(3), atol=1e-12)

    def test_jitter_used_for_slightly_negative(self):
        m = np.diag([1.0, -1e-11])
        S, eps = cholesky_psd(m)
        assert eps > 0
        assert_allclose(S @ S.T, m + eps * np.eye(2), atol=1e-15)

    def test_not_factorizable(self):
        with pytest.raises(NotFactorizable):
            cholesky_psd(np.diag([1.0, -1.0]))
        with pytest.raises(NotFactorizable):
            cholesky_psd([[np.nan]])

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            A = rng.standard_normal((n, n)) * rng.uniform(0.01, 100)
            m = A @ A.T
            S, eps = cholesky_psd(m)
            assert np.max(np.abs(S @ S.T - m)) <= 1e-9 * np.max(np.abs(m))
            assert_allclose(np.triu(S, 1), 0.0)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((5, 3, 3))
        ms = A @ np.swapaxes(A, 1, 2)
        ms[2] = 0.0
        S = batch_cholesky_psd(ms)
        for k in range(5):
            assert_allclose(S[k], cholesky_psd(ms[k])[0], atol=1e-14)


class TestTypes:
    def test_dims(self):
        with pytest.raises(ValueError):
            ModelDims(0, 1)
        with pytest.raises(ValueError):
            ModelDims(1, 2)

    def test_noise_spec(self):
        ns = NoiseSpec([0.05, 0.3], [1.0])
        assert_allclose(ns.Q, np.diag([0.0025, 0.09]))
        assert_allclose(ns.R, [[1.0]])
        with pytest.raises(ValueError):
            NoiseSpec([-1.0], [1.0])
        with pytest.raises(ValueError):
            NoiseSpec([np.inf], [1.0])

    def test_selector(self):
        sel = ObservationSelector((1,), 2)
        assert sel.hidden_indices == (0,)
        assert_allclose(sel.matrix, [[0.0, 1.0]])
        x = np.array([[3.0, 4.0], [5.0, 6.0]])
        assert_allclose(sel.select(x), [[4.0], [6.0]])
        assert_allclose(sel.embed(np.array([7.0]), fill=-1), [-1.0, 7.0])
        for bad in ((1, 0), (), (2,)):
            with pytest.raises(ValueError):
                ObservationSelector(bad, 2)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3))
    def test_select_embed_projection(self, y):
        sel = ObservationSelector((0, 2, 3), 5)
        assert_array_equal(sel.select(sel.embed(np.array(y))), y)

    def test_belief_validation(self):
        with pytest.raises(ValueError):
            GaussianBelief([0.0, 0.0], [[1.0, 0.5], [0.4, 1.0]])
        with pytest.raises(ValueError):
            GaussianBelief([0.0], np.eye(2))
        b = GaussianBelief(0.0, 1.0)
        assert b.dim == 1 and b.is_psd()
        assert not GaussianBelief([0, 0], np.diag([1.0, -1.0])).is_psd()

    def test_time_series(self):
        ts = TimeSeries(1880, [1.0, 2.0, 3.0], label="t")
        assert ts.values.shape == (3, 1)
        assert_array_equal(ts.years, [1880, 1881, 1882])
        assert ts.end_year == 1882
        with pytest.raises(ValueError):
            ts.values[0, 0] = 5.0
        assert ts.slice_years(1881, 1882).start_year == 1881
        with pytest.raises(ValueError):
            ts.slice_years(1870, 1881)
        with pytest.raises(ValueError):
            TimeSeries(1880, [1.0, np.nan])
        with pytest.raises(ValueError):
            TimeSeries(1880, [])

    def test_symmetrize(self):
        m = np.array([[1.0, 2.0], [0.0, 1.0]])
        assert_allclose(symmetrize(m), [[1.0, 1.0], [1.0, 1.0]])


class TestRng:
    def test_reproducible(self):
        a = RngStream(42, 3).normal(100)
        b = RngStream(42, 3).normal(100)
        assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(42, 3).normal(10), RngStream(42, 4).normal(10))
        s = RngStream(42, 3)
        assert not np.array_equal(s.child("obs").normal(10), s.child("ukf").normal(10))
        assert_array_equal(s.child("obs", 2).normal(5), RngStream(42, 3, ("obs", 2)).normal(5))

    def test_streams_uncorrelated(self):
        a = RngStream(7, 0).normal(100_000)
        b = RngStream(7, 1).normal(100_000)
        # 4.5 sigma of the sample correlation under independence
        assert abs(np.corrcoef(a, b)[0, 1]) < 4.5 / np.sqrt(a.size)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            RngStream(-1)


class TestDraws:
    def test_zero_std_returns_mean(self):
        mean = np.array([1.0, -2.0])
        assert_array_equal(gaussian_draw(RngStream(0), mean, np.zeros(2)), mean)

    def test_moments(self):
        z = gaussian_draw(RngStream(1), np.zeros(1_000_000), 1.0)
        assert abs(z.mean()) <= 0.01
        assert 0.995 <= z.std() <= 1.005

    def test_deterministic(self):
        assert_array_equal(gaussian_draw(RngStream(5, 1), 0.0, np.ones(7)), gaussian_draw(RngStream(5, 1), 0.0, np.ones(7)))

    def test_negative_std(self):
        with pytest.raises(ValueError):
            gaussian_draw(RngStream(0), 0.0, -1.0)

    def test_perturb_zero_noise(self):
        ts = TimeSeries(1880, np.linspace(0, 1, 10))
        out = perturb_observations(RngStream(0), ts, 0.0)
        assert_array_equal(out.values, ts.values)
        assert out.meta["measurement_std"] == [0.0]

    def test_perturb_std(self):
        ts = TimeSeries(1880, np.full(10_000, 14.0))
        out = perturb_observations(RngStream(3), ts, 1.0)
        assert 0.97 <= np.std(out.values - ts.values, ddof=1) <= 1.03
        assert out.meta["seed"] == 3

    def test_perturb_streams_independent(self):
        ts = TimeSeries(1880, np.zeros(20))
        a = perturb_observations(RngStream(3, 0), ts, 1.0)
        b = perturb_observations(RngStream(3, 1), ts, 1.0)
        assert not np.array_equal(a.values, b.values)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_cholesky_round_trip_property(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    m = A @ A.T
    S, eps = cholesky_psd(m)
    assert np.max(np.abs(S @ S.T - m)) <= 1e-9 * max(np.max(np.abs(m)), 1e-300) + eps
