import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from nonlinear_assim.core import RngStream
from nonlinear_assim.resampling import (
    ParticleSet,
    ResamplingKind,
    multinomial_resample,
    resample_indices,
    resample_particles,
    systematic_resample,
)


def counts(idx, I):
    return np.bincount(idx, minlength=I)


class TestMultinomial:
    def test_point_mass(self):
        assert_array_equal(multinomial_resample([1.0, 0.0, 0.0], RngStream(0)), [0, 0, 0])

    def test_uniform_counts_binomial(self):
        rng = RngStream(1)
        reps = 100_000
        total = np.zeros(4)
        for _ in range(reps // 1000):
            # 1000 resamples of size 4 per block
            for _ in range(1000):
                total += counts(multinomial_resample(np.full(4, 0.25), rng), 4)
        n = 4 * reps
        sd = np.sqrt(n * 0.25 * 0.75)
        assert np.all(np.abs(total - n / 4) <= 3 * sd)

    def test_deterministic(self):
        w = np.random.default_rng(0).dirichlet(np.ones(20))
        assert_array_equal(multinomial_resample(w, RngStream(9)), multinomial_resample(w, RngStream(9)))

    def test_zero_weight_never_selected(self):
        w = np.array([0.5, 0.0, 0.5, 0.0])
        rng = RngStream(2)
        for _ in range(200):
            idx = multinomial_resample(w, rng)
            assert not np.isin(idx, [1, 3]).any()


class TestSystematic:
    def test_uniform_fixed_offset(self):
        assert_array_equal(systematic_resample(np.full(4, 0.25), offset=0.1), [0, 1, 2, 3])

    def test_point_mass(self):
        assert_array_equal(systematic_resample([1.0, 0.0, 0.0, 0.0], RngStream(0)), [0, 0, 0, 0])

    def test_boundary_convention(self):
        # u lands exactly on Q = 0.25 -> belongs to the first bracket
        assert_array_equal(systematic_resample(np.full(4, 0.25), offset=0.25), [0, 1, 2, 3])

    def test_stratification_bound_grid(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            I = int(rng.integers(2, 30))
            w = rng.dirichlet(np.ones(I) * rng.uniform(0.1, 3))
            for u in np.linspace(1e-9, 1.0 / I, 17):
                c = counts(systematic_resample(w, offset=u), I)
                assert c.sum() == I
                assert np.all(np.abs(c - I * w) < 1 + 1e-9)

    def test_offset_range(self):
        with pytest.raises(ValueError):
            systematic_resample(np.full(4, 0.25), offset=0.0)
        with pytest.raises(ValueError):
            systematic_resample(np.full(4, 0.25), offset=0.3)
        with pytest.raises(ValueError):
            systematic_resample(np.full(4, 0.25))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31 - 1), st.floats(1e-6, 1.0))
def test_systematic_counts_property(I, seed, frac):
    w = np.random.default_rng(seed).dirichlet(np.ones(I))
    c = counts(systematic_resample(w, offset=frac / I), I)
    assert np.all((c == np.floor(I * w)) | (c == np.ceil(I * w)) | (np.abs(c - I * w) < 1e-9 + 1))


def test_weight_validation():
    for bad in ([0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], []):
        with pytest.raises(ValueError):
            resample_indices(bad, ResamplingKind.SYSTEMATIC, RngStream(0))


def test_resample_particles():
    I = 5
    ps = ParticleSet(
        states=np.arange(I, dtype=float)[:, None],
        weights=np.array([0, 0, 1.0, 0, 0]),
        means=np.arange(I, dtype=float)[:, None] + 10,
        covs=np.arange(I, dtype=float)[:, None, None],
    )
    for kind in ResamplingKind:
        out = resample_particles(ps, kind, RngStream(1))
        assert_array_equal(out.states[:, 0], 2.0)
        assert_array_equal(out.means[:, 0], 12.0)
        assert_array_equal(out.covs[:, 0, 0], 2.0)
        assert_array_equal(out.weights, 0.2)
    ps.weights = np.full(I, 0.2)
    out = resample_particles(ps, "systematic", RngStream(1))
    assert sorted(out.states[:, 0]) == list(range(I))


def test_particle_set_moments():
    ps = ParticleSet(np.array([[0.0], [2.0]]), np.array([0.25, 0.75]), np.zeros((2, 1)), np.zeros((2, 1, 1)))
    assert ps.mean()[0] == 1.5
    assert ps.variance()[0] == 0.25 * 2.25 + 0.75 * 0.25
    assert ps.ess == 1 / (0.25**2 + 0.75**2)
