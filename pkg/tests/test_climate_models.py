import dataclasses
import pickle

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from nonlinear_assim.climate_models import (
    Coupled2DParams,
    EBMParams,
    co2_at,
    coupled_step,
    deterministic_trajectory,
    ebm_step,
    make_coupled_model,
    make_ebm_model,
    simulate_ensemble,
)
from nonlinear_assim.core import RngStream


class TestCO2:
    def test_values(self):
        assert co2_at(1850) == 280.0
        assert_allclose(co2_at(2070), 560.0)
        assert_allclose(co2_at(1960), 315.0)

    def test_before_base_year(self):
        assert co2_at(1800) < 280.0

    def test_monotone_after_1850(self):
        assert np.all(np.diff(co2_at(np.arange(1850, 2100))) >= 0)


class TestEBM:
    def test_equilibrium(self):
        assert ebm_step(14.0, 1850) == 14.0

    def test_feedback(self):
        assert_allclose(ebm_step(15.0, 1850), 15.0 - 1.3 / 51, rtol=1e-15)
        assert_allclose(ebm_step(15.0, 1850), 14.97451, atol=5e-6)

    def test_forcing(self):
        assert_allclose(ebm_step(14.0, 2070), 14.0 + 5 * np.log(2) / 51, rtol=1e-15)
        assert_allclose(ebm_step(14.0, 2070), 14.06796, atol=5e-6)

    def test_noise_is_additive(self):
        assert ebm_step(14.0, 1850, 0.25) == 14.25

    def test_monotone_in_year(self):
        out = [ebm_step(14.5, y) for y in range(1850, 2050)]
        assert np.all(np.diff(out) >= 0)

    def test_equilibrium_other_params(self):
        p = EBMParams(feedback=-2.0, preindustrial_temp=10.0)
        assert ebm_step(10.0, 1850, p=p) == 10.0

    def test_thermal_offset(self):
        assert_allclose(EBMParams().thermal_offset, 1368 * 0.7 / 4 - 1.3 * 14)

    def test_validation(self):
        for bad in ({"heat_capacity": 0}, {"albedo": 1.5}, {"co2_pi": 0}, {"feedback": 0.1}):
            with pytest.raises(ValueError):
                EBMParams(**bad)


class TestCoupled:
    def test_intercepts(self):
        assert_allclose(coupled_step([0.0, 0.0], 1880), [0.0187, 0.2072])

    def test_unit_temperature(self):
        assert_allclose(coupled_step([1.0, 0.0], 1880), [0.8587, 0.6745], rtol=1e-14)

    def test_deterministic(self):
        x = np.array([0.3, 4.0])
        assert_array_equal(coupled_step(x, 1900, np.zeros(2)), coupled_step(x, 1900, np.zeros(2)))

    def test_linear_without_intercepts(self):
        p = dataclasses.replace(Coupled2DParams(), c1=0.0, c2=0.0)
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal((2, 2))
        a, b = 1.7, -0.4
        lhs = coupled_step(a * x + b * y, 0, p=p)
        assert_allclose(lhs, a * coupled_step(x, 0, p=p) + b * coupled_step(y, 0, p=p), atol=1e-12)

    def test_batch_broadcast(self):
        X = np.random.default_rng(1).standard_normal((3, 5, 2))
        out = coupled_step(X, 1880)
        assert out.shape == X.shape
        assert_allclose(out[2, 4], coupled_step(X[2, 4], 1880))

    def test_validation(self):
        with pytest.raises(ValueError):
            Coupled2DParams(a11=0.1)
        with pytest.raises(ValueError):
            Coupled2DParams(c1=np.nan)


class TestModels:
    def test_ebm_model(self):
        m = make_ebm_model(q=0.05, r=0.5)
        assert (m.L, m.K) == (1, 1)
        assert_allclose(m.noise.process_std, [0.05])
        assert_allclose(m.measure(np.array([14.2])), [14.2])

    def test_coupled_selectors(self):
        assert make_coupled_model(observe="temperature").selector.observed_indices == (0,)
        assert make_coupled_model(observe="sealevel").selector.observed_indices == (1,)
        m = make_coupled_model(q=(0.05, 0.3), r=2.0)
        assert_allclose(m.noise.process_std, [0.05, 0.3])
        assert_allclose(m.noise.measurement_std, [2.0, 2.0])
        with pytest.raises(ValueError):
            make_coupled_model(observe="salinity")

    def test_models_pickle(self):
        m = make_coupled_model()
        m2 = pickle.loads(pickle.dumps(m))
        assert_allclose(m2.propagate(np.ones(2), 1900), m.propagate(np.ones(2), 1900))


class TestSimulation:
    def test_zero_noise_collapses(self):
        m = make_ebm_model(q=0.0)
        ens = simulate_ensemble(m, [14.0], 5, 30, RngStream(0), 1851)
        det = deterministic_trajectory(m, [14.0], 30, 1850)
        for p in range(5):
            assert_allclose(ens.values[p], det[1:])

    def test_early_spread_grows_like_random_walk(self):
        m = make_ebm_model(q=0.05)
        ens = simulate_ensemble(m, [14.0], 1000, 144, RngStream(1), 1850)
        std = ens.values[:, :10, 0].std(axis=0, ddof=1)
        expected = 0.05 * np.sqrt(np.arange(1, 11))
        assert np.all(np.abs(std / expected - 1) <= 0.2)

    def test_deterministic(self):
        m = make_coupled_model()
        a = simulate_ensemble(m, [0.0, 0.0], 20, 10, RngStream(3), 1880)
        b = simulate_ensemble(m, [0.0, 0.0], 20, 10, RngStream(3), 1880)
        assert_array_equal(a.values, b.values)

    def test_paths_stable_under_more_paths(self):
        m = make_coupled_model()
        a = simulate_ensemble(m, [0.0, 0.0], 5, 10, RngStream(3), 1880)
        b = simulate_ensemble(m, [0.0, 0.0], 9, 10, RngStream(3), 1880)
        assert_array_equal(a.values, b.values[:5])

    def test_shape_and_years(self):
        ens = simulate_ensemble(make_coupled_model(), [0.0, 0.0], 3, 7, RngStream(0), 1880)
        assert ens.values.shape == (3, 7, 2)
        assert_array_equal(ens.years, np.arange(1880, 1887))
        with pytest.raises(ValueError):
            simulate_ensemble(make_coupled_model(), [0.0, 0.0], 0, 7, RngStream(0), 1880)

    def test_deterministic_trajectory_rows(self):
        m = make_ebm_model()
        tr = deterministic_trajectory(m, [15.0], 2, 1850)
        assert tr.shape == (3, 1)
        assert tr[0, 0] == 15.0
        assert_allclose(tr[1, 0], ebm_step(15.0, 1850))
        assert_allclose(tr[2, 0], ebm_step(tr[1, 0], 1851))
