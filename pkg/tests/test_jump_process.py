"""Jump-process model: multiplier draws, propagation, transition densities."""

import numpy as np
import pytest
from scipy import stats

from flowsense.jumpmodel import (MultiplierDistribution, gmm_transition_pdf,
                                 propagate, sample_multipliers,
                                 transition_logpdf_given_theta)

from oracles import gauss_logpdf

REF_SUPPORT = [0.5, 0.75, 1.0, 1.25, 1.5]
REF_PROBS = [0.1, 0.1, 0.6, 0.1, 0.1]


def ref_dist(n_zones=2):
    return MultiplierDistribution.shared(REF_SUPPORT, REF_PROBS, n_zones)


class TestMultiplierDistribution:
    def test_probs_must_sum_to_one(self):
        with pytest.raises(ValueError):
            MultiplierDistribution([[0.5, 1.5]], [[0.3, 0.6]])

    def test_probs_sum_tolerance(self):
        MultiplierDistribution([[0.5, 1.5]], [[0.3, 0.7 + 5e-13]])

    def test_support_must_be_positive(self):
        with pytest.raises(ValueError):
            MultiplierDistribution([[0.0, 1.0]], [[0.5, 0.5]])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            MultiplierDistribution([[0.5, 1.0, 1.5]], [[0.5, 0.5]])

    def test_per_zone_sums_hold_after_construction(self):
        dist = ref_dist(3)
        for p in dist.probs:
            assert abs(p.sum() - 1.0) <= 1e-12


class TestSampleMultipliers:
    def test_draws_land_in_support_and_frequency(self):
        dist = ref_dist(2)
        rng = np.random.default_rng(7)
        draws = sample_multipliers(dist, rng, size=100_000)
        assert set(np.unique(draws)) <= set(REF_SUPPORT)
        freq_one = np.mean(draws[:, 0] == 1.0)
        assert abs(freq_one - 0.6) < 0.01

    def test_degenerate_distribution(self):
        dist = MultiplierDistribution([[1.0]], [[1.0]])
        rng = np.random.default_rng(0)
        assert sample_multipliers(dist, rng) == pytest.approx([1.0])
        assert np.all(sample_multipliers(dist, rng, size=50) == 1.0)

    def test_chi_square_goodness_of_fit(self):
        dist = MultiplierDistribution([[0.5, 1.5]], [[0.3, 0.7]])
        rng = np.random.default_rng(11)
        draws = sample_multipliers(dist, rng, size=100_000)[:, 0]
        counts = np.array([(draws == 0.5).sum(), (draws == 1.5).sum()])
        expected = np.array([0.3, 0.7]) * draws.size
        _, p_value = stats.chisquare(counts, expected)
        assert p_value > 0.01

    def test_single_draw_shape(self):
        theta = sample_multipliers(ref_dist(2), np.random.default_rng(1))
        assert theta.shape == (2,)


class TestPropagate:
    def test_deterministic_jump_magnitudes(self):
        rng = np.random.default_rng(3)
        out = propagate([2.0, 10.0], [1.5, 1.5], [0.0, 0.0], rng)
        assert np.array_equal(out, [3.0, 15.0])

    def test_identity_multiplier_no_noise(self):
        rng = np.random.default_rng(3)
        out = propagate([5.0, 5.0], [1.0, 1.0], [0.0, 0.0], rng)
        assert np.array_equal(out, [5.0, 5.0])

    def test_moments(self):
        rng = np.random.default_rng(5)
        n = 100_000
        q = np.tile([2.0, 10.0], (n, 1))
        out = propagate(q, np.ones(2), [0.25, 1.0], rng)
        sem = np.sqrt(np.array([0.25, 1.0]) / n)
        assert np.all(np.abs(out.mean(axis=0) - [2.0, 10.0]) < 3 * sem)
        assert np.all(np.abs(out.var(axis=0) / [0.25, 1.0] - 1.0) < 0.05)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            propagate([1.0], [1.0], [-0.1], np.random.default_rng(0))

    def test_negative_rates_not_clamped_by_default(self):
        rng = np.random.default_rng(2)
        out = propagate(np.zeros((500, 1)), np.ones(1), [1.0], rng)
        assert (out < 0).any()

    def test_clamp_flag(self):
        rng = np.random.default_rng(2)
        out = propagate(np.zeros((500, 1)), np.ones(1), [1.0], rng,
                        clamp_negative=True)
        assert (out >= 0).all()


class TestTransitionLogpdf:
    def test_peak_value_two_zones_unit_variance(self):
        val = transition_logpdf_given_theta([2.0, 10.0], [2.0, 10.0],
                                            [1.0, 1.0], [1.0, 1.0])
        assert val == pytest.approx(-np.log(2.0 * np.pi), abs=1e-14)

    def test_against_direct_density_formula(self):
        val = transition_logpdf_given_theta([2.5, 10.0], [2.0, 10.0],
                                            [1.0, 1.0], [0.5, 0.5])
        expected = gauss_logpdf(np.array([2.5, 10.0]), np.array([2.0, 10.0]),
                                np.array([0.5, 0.5]))
        assert val == pytest.approx(expected, abs=1e-12)

    def test_monotone_decay_away_from_mean(self):
        base = np.array([2.0, 10.0])
        vals = [transition_logpdf_given_theta(base + [d, 0.0], base,
                                              [1.0, 1.0], [0.3, 0.3])
                for d in (0.0, 0.5, 1.0, 2.0)]
        assert np.all(np.diff(vals) < 0)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            transition_logpdf_given_theta([1.0], [1.0], [1.0], [0.0])


class TestGmmTransitionPdf:
    def test_single_component_collapses_to_gaussian(self):
        dist = MultiplierDistribution.shared([1.0], [1.0], 2)
        q, q_next = np.array([2.0, 10.0]), np.array([2.3, 9.1])
        sigma = np.array([0.5, 0.5])
        val = gmm_transition_pdf(q_next, q, dist, sigma)
        expected = np.exp(transition_logpdf_given_theta(q_next, q,
                                                        [1.0, 1.0], sigma))
        assert val == pytest.approx(expected, rel=1e-12)

    def test_matches_monte_carlo_binning(self):
        dist = ref_dist(2)
        sigma = np.array([0.5, 0.5])
        q = np.array([2.0, 10.0])
        rng = np.random.default_rng(17)
        n = 1_000_000
        theta = sample_multipliers(dist, rng, size=n)
        draws = propagate(np.tile(q, (n, 1)), theta, sigma, rng)
        # kernel-free bin estimate of the density at q_next = q, per zone
        width = 0.08
        density = 1.0
        for i in range(2):
            inside = np.abs(draws[:, i] - q[i]) < width / 2
            density *= inside.mean() / width
        val = gmm_transition_pdf(q, q, dist, sigma)
        assert val == pytest.approx(density, rel=0.02)

    def test_marginals_integrate_to_one(self):
        dist = ref_dist(2)
        sigma = np.array([0.5, 0.8])
        q = np.array([2.0, 10.0])
        for i in range(2):
            lo = min(c * q[i] for c in REF_SUPPORT) - 8 * np.sqrt(sigma[i])
            hi = max(c * q[i] for c in REF_SUPPORT) + 8 * np.sqrt(sigma[i])
            grid = np.linspace(lo, hi, 20_001)
            comps = np.zeros_like(grid)
            for c, p in zip(dist.support[i], dist.probs[i]):
                comps += p * np.exp(-0.5 * (grid - c * q[i]) ** 2 / sigma[i]) \
                    / np.sqrt(2 * np.pi * sigma[i])
            integral = np.trapezoid(comps, grid)
            assert integral == pytest.approx(1.0, abs=1e-6)

    def test_nonnegative_everywhere(self):
        dist = ref_dist(2)
        rng = np.random.default_rng(23)
        pts = rng.uniform(-30, 30, size=(200, 2))
        vals = gmm_transition_pdf(pts, np.array([2.0, 10.0]), dist,
                                  np.array([0.4, 0.4]))
        assert np.all(vals >= 0.0)

    def test_empirical_law_matches_mixture_cdf(self):
        dist = ref_dist(2)
        sigma = np.array([0.5, 0.5])
        q = np.array([2.0, 10.0])
        rng = np.random.default_rng(29)
        n = 100_000
        theta = sample_multipliers(dist, rng, size=n)
        draws = propagate(np.tile(q, (n, 1)), theta, sigma, rng)
        for i in range(2):
            def mixture_cdf(x, zone=i):
                total = np.zeros_like(np.asarray(x, dtype=float))
                for c, p in zip(dist.support[zone], dist.probs[zone]):
                    total += p * stats.norm.cdf(
                        x, loc=c * q[zone], scale=np.sqrt(sigma[zone]))
                return total
            ks = stats.kstest(draws[:, i], mixture_cdf)
            assert ks.statistic < 0.01
