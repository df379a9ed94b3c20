"""Wellbore observation operator: march physics, noise, log-likelihood."""

import numpy as np
import pytest

from flowsense.config import load_scenario
from flowsense.experiment import load_observations, save_observations
from flowsense.wellsim import (GaugeRecord, ObservationNoiseModel,
                               WellGeometry, WellObservationModel,
                               observation_loglik, observe, simulate_gauges,
                               simulate_gauges_batch, true_vertical_depth)

from oracles import gauss_logpdf


@pytest.fixture(scope="module")
def scenario():
    return load_scenario("pos_default")


class TestGeometry:
    def test_gauge_must_precede_zone(self):
        with pytest.raises(ValueError):
            WellGeometry(zone_intervals=[(3500.0, 3550.0)],
                         gauge_mds=[3510.0], segment_length=50.0)

    def test_segment_length_must_divide_zone(self):
        with pytest.raises(ValueError):
            WellGeometry(zone_intervals=[(3500.0, 3550.0)],
                         gauge_mds=[3475.0], segment_length=40.0)

    def test_tvd_profile(self, scenario):
        g = scenario.geometry_truth
        assert float(true_vertical_depth(500.0, g)) == pytest.approx(500.0)
        assert float(true_vertical_depth(1000.0, g)) == pytest.approx(1000.0)
        # monotone, capped at the horizontal plane
        mds = np.linspace(0.0, 4000.0, 801)
        tvd = true_vertical_depth(mds, g)
        assert np.all(np.diff(tvd) >= -1e-12)
        assert float(true_vertical_depth(4000.0, g)) == pytest.approx(1500.0)
        assert float(true_vertical_depth(3475.0, g)) == pytest.approx(1500.0)


class TestSimulateGauges:
    def test_no_flow_limit(self, scenario):
        rec = simulate_gauges(scenario.geometry_truth, scenario.zones,
                              [0.0, 0.0], scenario.physics)
        # horizontal section: pure hydrostatic column = bottom-zone pressure
        deepest = max(scenario.zones,
                      key=lambda z: z.reservoir_pressure)
        assert np.allclose(rec.pressures, deepest.reservoir_pressure)
        t_geo = scenario.physics.surface_temperature + \
            scenario.physics.geothermal_gradient * 1500.0
        assert np.allclose(rec.temperatures, t_geo)

    def test_deterministic_bit_identical(self, scenario):
        a = simulate_gauges_batch(scenario.geometry_truth, scenario.zones,
                                  np.array([[2.0, 10.0]]), scenario.physics)
        b = simulate_gauges_batch(scenario.geometry_truth, scenario.zones,
                                  np.array([[2.0, 10.0]]), scenario.physics)
        assert np.array_equal(a, b)

    def test_pressure_drop_monotone_in_oil_rate(self, scenario):
        oil_rates = np.linspace(5.0, 20.0, 16)
        q = np.column_stack([np.full(16, 2.0), oil_rates])
        channels = simulate_gauges_batch(scenario.geometry_truth,
                                         scenario.zones, q, scenario.physics)
        # drop across the gauge-2 section grows strictly with the oil rate
        deepest = max(scenario.zones, key=lambda z: z.reservoir_pressure)
        drop = deepest.reservoir_pressure - channels[:, 1]
        assert np.all(np.diff(drop) > 0)

    def test_resolution_sensitivity(self, scenario):
        q = np.array([[2.0, 10.0]])
        coarse = simulate_gauges_batch(scenario.geometry_truth,
                                       scenario.zones, q, scenario.physics)
        fine = simulate_gauges_batch(
            scenario.geometry_truth.with_segment_length(5.0),
            scenario.zones, q, scenario.physics)
        temp_diff = np.abs(fine[0, 2:] - coarse[0, 2:])
        assert temp_diff.max() > 0.0

    def test_negative_rates_rejected(self, scenario):
        with pytest.raises(ValueError):
            simulate_gauges(scenario.geometry_truth, scenario.zones,
                            [-1.0, 10.0], scenario.physics)

    def test_gas_rate_does_not_touch_gauge2(self, scenario):
        lo = simulate_gauges(scenario.geometry_truth, scenario.zones,
                             [1.0, 10.0], scenario.physics)
        hi = simulate_gauges(scenario.geometry_truth, scenario.zones,
                             [3.0, 10.0], scenario.physics)
        # gauge 2 sits below the gas zone, so only oil flows past it
        assert lo.pressures[1] == hi.pressures[1]
        assert lo.temperatures[1] == hi.temperatures[1]
        assert lo.pressures[0] != hi.pressures[0]


class TestObserve:
    def test_zero_noise_limit(self, scenario):
        rec = simulate_gauges(scenario.geometry_truth, scenario.zones,
                              [2.0, 10.0], scenario.physics)
        tiny = ObservationNoiseModel(np.full(4, 1e-30))
        rng = np.random.default_rng(0)
        noised = observe(rec, tiny, rng)
        assert np.allclose(noised.vector(), rec.vector(), rtol=0, atol=1e-9)

    def test_relative_noise_magnitude(self, scenario):
        noise = scenario.noise_model()
        rec = simulate_gauges(scenario.geometry_truth, scenario.zones,
                              scenario.schedule.rates_at(10000.0),
                              scenario.physics)
        rng = np.random.default_rng(5)
        draws = np.array([observe(rec, noise, rng).vector()
                          for _ in range(10_000)])
        std = draws.std(axis=0)
        target = 2e-4 * np.abs(rec.vector())
        assert np.all(np.abs(std / target - 1.0) < 0.03)

    def test_scaling_doubles_variance(self, scenario):
        noise = scenario.noise_model()
        rec = simulate_gauges(scenario.geometry_truth, scenario.zones,
                              [2.0, 10.0], scenario.physics)
        rng = np.random.default_rng(9)
        var1 = np.array([observe(rec, noise, rng).vector()
                         for _ in range(10_000)]).var(axis=0)
        var2 = np.array([observe(rec, noise.with_scaling(2.0), rng).vector()
                         for _ in range(10_000)]).var(axis=0)
        assert np.all(np.abs(var2 / var1 - 2.0) < 0.1)


class TestObservationLoglik:
    def test_peak_value_at_exact_observation(self, scenario):
        q = np.array([2.0, 10.0])
        noise = scenario.noise_model()
        rec = simulate_gauges(scenario.geometry_assim, scenario.zones, q,
                              scenario.physics)
        val = observation_loglik(rec, q, scenario.geometry_assim,
                                 scenario.zones, noise, scenario.physics)
        expected = -0.5 * np.sum(np.log(2 * np.pi * noise.effective_diagonal))
        assert val == pytest.approx(expected, rel=1e-12)

    def test_agrees_with_direct_gaussian_formula(self, scenario):
        q = np.array([2.4, 9.3])
        noise = scenario.noise_model().with_scaling(1.7)
        rec = simulate_gauges(scenario.geometry_assim, scenario.zones,
                              [2.0, 10.0], scenario.physics)
        val = observation_loglik(rec, q, scenario.geometry_assim,
                                 scenario.zones, noise, scenario.physics)
        h = simulate_gauges(scenario.geometry_assim, scenario.zones, q,
                            scenario.physics).vector()
        expected = gauss_logpdf(rec.vector(), h, noise.effective_diagonal)
        assert val == pytest.approx(expected, abs=1e-10)

    def test_maximized_at_matching_rates(self, scenario):
        q = np.array([2.0, 10.0])
        noise = scenario.noise_model()
        model = WellObservationModel(scenario.geometry_assim, scenario.zones,
                                     noise, scenario.physics)
        y = model.simulate_batch(q[None, :])[0]
        base = model.loglik(y, q)
        for dq in ([0.2, 0.0], [-0.2, 0.0], [0.0, 0.4], [0.0, -0.4],
                   [0.1, 0.1]):
            assert model.loglik(y, q + dq) < base

    def test_scaling_changes_loglik_analytically(self, scenario):
        q = np.array([2.5, 11.0])
        noise = scenario.noise_model()
        model1 = WellObservationModel(scenario.geometry_assim, scenario.zones,
                                      noise, scenario.physics)
        model2 = WellObservationModel(scenario.geometry_assim, scenario.zones,
                                      noise.with_scaling(2.0),
                                      scenario.physics)
        y = model1.simulate_batch(np.array([[2.0, 10.0]]))[0]
        ll1 = model1.loglik(y, q)
        ll2 = model2.loglik(y, q)
        p = 4
        norm1 = -0.5 * np.sum(np.log(2 * np.pi * noise.effective_diagonal))
        mahal = 2.0 * (ll1 - norm1)  # -(residual weighted norm)
        expected = norm1 - 0.5 * p * np.log(2.0) + mahal / 4.0
        assert ll2 == pytest.approx(expected, rel=1e-12)

    def test_negative_rate_particles_get_neg_inf(self, scenario):
        noise = scenario.noise_model()
        model = WellObservationModel(scenario.geometry_assim, scenario.zones,
                                     noise, scenario.physics)
        y = model.simulate_batch(np.array([[2.0, 10.0]]))[0]
        lls = model.loglik_batch(y, np.array([[2.0, 10.0], [-0.1, 10.0]]))
        assert np.isfinite(lls[0])
        assert lls[1] == -np.inf


class TestChannelRoundTrip:
    def test_channel_ordering_and_csv_round_trip(self, scenario, tmp_path):
        recs = []
        rng = np.random.default_rng(3)
        for t in (10000.0, 10120.0):
            rec = simulate_gauges(scenario.geometry_truth, scenario.zones,
                                  [2.0, 10.0], scenario.physics, time=t)
            recs.append(observe(rec, scenario.noise_model(), rng))
        path = tmp_path / "observations.csv"
        save_observations(path, recs)
        header = path.read_text().splitlines()[0]
        assert header == "time_s,p_gauge1_pa,p_gauge2_pa,t_gauge1_k,t_gauge2_k"
        loaded = load_observations(path)
        for orig, back in zip(recs, loaded):
            assert back.time == orig.time
            np.testing.assert_allclose(back.vector(), orig.vector(),
                                       rtol=1e-9)

    def test_vector_layout(self):
        rec = GaugeRecord(0.0, [1.0, 2.0], [3.0, 4.0])
        assert np.array_equal(rec.vector(), [1.0, 2.0, 3.0, 4.0])
        back = GaugeRecord.from_vector(5.0, [1.0, 2.0, 3.0, 4.0])
        assert np.array_equal(back.pressures, [1.0, 2.0])
        assert np.array_equal(back.temperatures, [3.0, 4.0])
