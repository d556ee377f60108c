"""Computing-time laws: sampling, closed forms, group quadrature, concavity."""

import numpy as np
import pytest

from lagcsim.errors import ConfigError
from lagcsim.timing import (TimingModel, expected_max_group_time, expected_order_stat,
                            expected_order_stat_exponential, expected_order_stat_pareto,
                            group_time_cdf, group_time_quantile, harmonic, sample_times)


def _order_stat_mc(model, r, a, b, samples, seed):
    rng = np.random.default_rng(seed)
    draws = sample_times(model, r, samples * b, rng).reshape(samples, b)
    return float(np.mean(np.sort(draws, axis=1)[:, a - 1]))


class TestModelBasics:
    def test_mean_scales_with_redundancy(self, exp_timing, pareto_timing):
        for model in (exp_timing, pareto_timing):
            assert model.mean(3) == pytest.approx(0.15)

    def test_invalid_models_rejected(self):
        with pytest.raises(ConfigError):
            TimingModel("weibull", 0.05)
        with pytest.raises(ConfigError):
            TimingModel("pareto", 0.05, beta=0.9)
        with pytest.raises(ConfigError):
            TimingModel("exponential", -1.0)

    def test_samples_positive_and_deterministic(self, exp_timing, pareto_timing):
        for model in (exp_timing, pareto_timing):
            a = sample_times(model, 2, 1000, np.random.default_rng(3))
            b = sample_times(model, 2, 1000, np.random.default_rng(3))
            assert np.all(a > 0)
            assert np.array_equal(a, b)

    def test_sample_means(self, exp_timing):
        rng = np.random.default_rng(0)
        mc = sample_times(exp_timing, 1, 10**6, rng).mean()
        assert mc == pytest.approx(0.05, rel=0.01)
        # Pareto mean is eta*r regardless of beta.
        model = TimingModel("pareto", 1.0, beta=2.5)
        mc = sample_times(model, 1, 10**6, rng).mean()
        assert mc == pytest.approx(1.0, rel=0.01)

    def test_quantile_inverts_cdf(self, exp_timing, pareto_timing):
        for model in (exp_timing, pareto_timing):
            for q in (0.0, 0.3, 0.9, 0.999):
                assert float(model.cdf(model.quantile(q, 2), 2)) == pytest.approx(q, abs=1e-12)


class TestClosedForms:
    def test_exponential_examples(self):
        assert expected_order_stat_exponential(1, 1, 0.05, 1) == pytest.approx(0.05)
        assert expected_order_stat_exponential(1, 2, 0.05, 1) == pytest.approx(0.025)

    def test_exponential_vs_monte_carlo(self, exp_timing):
        mc = _order_stat_mc(exp_timing, 1, 3, 5, 400_000, seed=1)
        assert expected_order_stat(exp_timing, 3, 5, 1) == pytest.approx(mc, rel=0.01)

    def test_pareto_reduces_to_mean(self, pareto_timing):
        assert expected_order_stat_pareto(1, 1, 0.05, 2, 2.5) == pytest.approx(0.1)

    @pytest.mark.parametrize("a,b", [(2, 2), (1, 3)])
    def test_pareto_vs_monte_carlo(self, pareto_timing, a, b):
        mc = _order_stat_mc(pareto_timing, 1, a, b, 10**6, seed=2)
        assert expected_order_stat(pareto_timing, a, b, 1) == pytest.approx(mc, rel=0.01)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            expected_order_stat_exponential(3, 2, 0.05, 1)
        with pytest.raises(ValueError):
            expected_order_stat_pareto(2, 2, 0.05, 1, beta=1.0)

    def test_monotonicity(self, exp_timing, pareto_timing):
        for model in (exp_timing, pareto_timing):
            vals = [[expected_order_stat(model, a, b, 1) for a in range(1, b + 1)]
                    for b in range(1, 9)]
            for b_vals in vals:
                assert np.all(np.diff(b_vals) > 0)          # nondecreasing in a
            for b in range(2, 9):                           # nonincreasing in b
                for a in range(1, b):
                    assert vals[b - 1][a - 1] <= vals[b - 2][a - 1] + 1e-15


class TestGroupTimes:
    def test_cdf_trivial_cases(self, exp_timing):
        x = 0.07
        assert float(group_time_cdf(exp_timing, 1, 1, 1, x)) == pytest.approx(
            float(exp_timing.cdf(x, 1)))
        assert float(group_time_cdf(exp_timing, 1, 3, 3, x)) == pytest.approx(
            float(exp_timing.cdf(x, 1)) ** 3)

    def test_cdf_monotone_to_one(self, pareto_timing):
        xs = np.linspace(0.0, 5.0, 200)
        vals = group_time_cdf(pareto_timing, 2, 5, 3, xs)
        assert np.all(np.diff(vals) >= -1e-12)
        assert float(group_time_cdf(pareto_timing, 2, 5, 3, 1e6)) == pytest.approx(1.0)

    def test_cdf_vs_empirical(self, exp_timing):
        m_g, f = 3, 2
        rng = np.random.default_rng(4)
        draws = sample_times(exp_timing, 1, 10**6 * m_g, rng).reshape(10**6, m_g)
        done = np.sort(draws, axis=1)[:, f - 1]
        xs = np.quantile(done, np.linspace(0.01, 0.99, 25))
        emp = np.searchsorted(np.sort(done), xs, side="right") / done.shape[0]
        theory = group_time_cdf(exp_timing, 1, m_g, f, xs)
        assert np.max(np.abs(emp - theory)) < 0.005

    def test_quantile_inverts(self, exp_timing, pareto_timing):
        for model in (exp_timing, pareto_timing):
            x = group_time_quantile(model, 2, 4, 2, 0.87)
            assert float(group_time_cdf(model, 2, 4, 2, x)) == pytest.approx(0.87, abs=1e-9)

    def test_max_group_reduces_to_mean(self, exp_timing):
        assert expected_max_group_time(exp_timing, 2, 1, 1, 1) == pytest.approx(0.1, rel=1e-6)

    def test_max_group_vs_monte_carlo(self, exp_timing):
        rng = np.random.default_rng(5)
        draws = sample_times(exp_timing, 1, 300_000 * 2 * 2, rng).reshape(300_000, 2, 2)
        mc = float(np.mean(draws.min(axis=2).max(axis=1)))
        quad = expected_max_group_time(exp_timing, 1, 2, 1, 2)
        assert quad == pytest.approx(mc, rel=0.01)

    def test_quadrature_matches_closed_forms(self, exp_timing, pareto_timing):
        # a = 1 is a plain order statistic; M_G = 1 is a plain maximum.
        for model in (exp_timing, pareto_timing):
            assert expected_max_group_time(model, 1, 5, 2, 1) == pytest.approx(
                expected_order_stat(model, 2, 5, 1), rel=1e-6)
            assert expected_max_group_time(model, 1, 1, 1, 7) == pytest.approx(
                expected_order_stat(model, 7, 7, 1), rel=1e-6)

    def test_quadrature_refinement_stability(self, pareto_timing, monkeypatch):
        from lagcsim import timing as timing_mod
        base = expected_max_group_time(pareto_timing, 4, 4, 2, 5)
        monkeypatch.setattr(timing_mod, "_QUAD_ABS_TOL", 1e-11)
        monkeypatch.setattr(timing_mod, "_TAIL_QUANTILE_GAP", 1e-12)
        refined = expected_max_group_time(pareto_timing, 4, 4, 2, 5)
        assert base == pytest.approx(refined, rel=1e-6)

    def test_heavy_tail_quadrature_matches_closed_form(self):
        # beta = 1.1 with the paper's redundancy: waits avoid the extreme tail.
        heavy = TimingModel("pareto", 0.05, beta=1.1)
        assert expected_max_group_time(heavy, 4, 20, 17, 1) == pytest.approx(
            expected_order_stat(heavy, 17, 20, 4), rel=1e-6)
        # Tail index beta*(M_G-F+1) = 1.1: nearly divergent, quadrature only
        # reaches ~1e-5 here (analysis uses the closed form for M_G = 1).
        assert expected_max_group_time(heavy, 4, 1, 1, 3) == pytest.approx(
            expected_order_stat(heavy, 3, 3, 4), rel=5e-5)


class TestAppendixProperties:
    """Discrete concavity and the Jensen bound for expected maxima.

    Concavity in ``a`` is a property of expected maxima T[a:a] (the increment
    is the integral of F^a (1-F), decreasing in a); it does not hold for
    T[a:b] at fixed b, where the top-order gaps widen.
    """

    @pytest.mark.parametrize("law", ["exponential", "pareto"])
    def test_concavity_of_maxima(self, law, exp_timing, pareto_timing):
        model = exp_timing if law == "exponential" else pareto_timing
        vals = [expected_order_stat(model, a, a, 1) for a in range(1, 12)]
        increments = np.diff(vals)
        assert np.all(np.diff(increments) <= 1e-6)

    def test_concavity_of_group_maxima(self, exp_timing):
        vals = [expected_max_group_time(exp_timing, 2, 4, 2, a) for a in range(1, 9)]
        increments = np.diff(vals)
        assert np.all(np.diff(increments) <= 1e-6)

    @pytest.mark.parametrize("law", ["exponential", "pareto"])
    def test_jensen_bound_random_splits(self, law, exp_timing, pareto_timing):
        model = exp_timing if law == "exponential" else pareto_timing
        rng = np.random.default_rng(6)
        maxima = {a: expected_order_stat(model, a, a, 1) for a in range(1, 25)}
        for _ in range(100):
            k = int(rng.integers(2, 6))
            q = int(rng.integers(1, 5))
            total = k * q
            # random composition of `total` into k parts >= 1
            cuts = np.sort(rng.choice(np.arange(1, total), size=k - 1, replace=False))
            parts = np.diff(np.concatenate([[0], cuts, [total]]))
            assert parts.sum() == total and np.all(parts >= 1)
            mean_of_vals = np.mean([maxima[int(p)] for p in parts])
            assert maxima[q] >= mean_of_vals - 1e-12


def test_harmonic_numbers():
    assert harmonic(0) == 0.0
    assert harmonic(3) == pytest.approx(1.0 + 0.5 + 1.0 / 3.0)
