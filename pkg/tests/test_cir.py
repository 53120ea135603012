import json
import math
from fractions import Fraction

import numpy as np
import pytest

from nearunit.cir import (CirParams, LimitTable, euler_terminal, exact_chain, explosive_limit_variance,
                          feller_check, ltu_functional, sample_exact_transition, sample_explosive_limit,
                          simulate_path_euler, stationary_moments, tabulate_ltu_limit, transition_mean,
                          transition_var)
from nearunit.errors import InvalidInput
from nearunit.rng import stream

P = CirParams(1.0, -1.0, 1.0)


class TestStationaryMoments:
    def test_examples(self):
        assert stationary_moments(1, 1) == (1, 1.5, 3)
        assert stationary_moments(1, 2) == (1, 2, 6)

    def test_exact_in_fractions(self):
        m = stationary_moments(Fraction(1), Fraction(1))
        assert m == (1, Fraction(3, 2), 3)
        assert all(isinstance(v, Fraction) for v in m)

    def test_degenerate(self):
        assert stationary_moments(2.0, 0.0) == (2.0, 4.0, 8.0)

    def test_match_gamma_law(self):
        from scipy import stats
        mu, s2 = 1.3, 0.7
        g = stats.gamma(2 * mu / s2, scale=s2 / 2)
        assert np.allclose(stationary_moments(mu, s2), [g.moment(1), g.moment(2), g.moment(3)])


class TestFeller:
    @pytest.mark.parametrize("mu,s2,expected", [(1, 1, True), (1, 3, False), (0.5, 1.0, True)])
    def test_examples(self, mu, s2, expected):
        assert feller_check(mu, s2) is expected

    def test_dichotomy(self):
        below = exact_chain(CirParams(1.0, -1.0, 3.0), 1.0, 0.01, 100_000, stream(1, "feller"))
        above = exact_chain(CirParams(1.0, -1.0, 1.0), 1.0, 0.01, 100_000, stream(1, "feller"))
        assert np.mean(below < 1e-6) > 0
        assert np.mean(above < 1e-6) == 0


class TestEuler:
    def test_deterministic_limit(self):
        for steps in (100, 1000):
            path, _ = simulate_path_euler(CirParams(1.0, -1.0, 0.0), 0.0, 1.0, steps, stream(0, "e"))
            s = np.linspace(0, 1, steps + 1)
            assert np.max(np.abs(path - (1 - np.exp(-s)))) < 2.0 / steps

    def test_zero_increments(self):
        steps = 50
        path, inc = simulate_path_euler(P, 0.5, 2.0, steps, increments=np.zeros(steps))
        h = 2.0 / steps
        y = [0.5]
        for _ in range(steps):
            y.append(y[-1] + (1.0 - y[-1]) * h)
        assert np.allclose(path, y, rtol=0, atol=1e-14)
        assert np.all(inc == 0)

    def test_increments_returned_and_reused(self):
        path, inc = simulate_path_euler(P, 0.0, 1.0, 200, stream(3, "e"))
        again, _ = simulate_path_euler(P, 0.0, 1.0, 200, increments=inc)
        assert np.array_equal(path, again)
        assert inc.shape == (200,)

    def test_nonnegative(self):
        # Feller violated: the raw scheme would go negative
        path, _ = simulate_path_euler(CirParams(0.1, -1.0, 4.0), 0.0, 5.0, 5000, stream(4, "e"))
        assert path.min() >= 0.0

    def test_mean_at_one(self):
        d = euler_terminal(P, 0.0, 1.0, 5000, 100_000, stream(5, "e"))
        se = d.std() / math.sqrt(d.size)
        assert abs(d.mean() - (1 - math.exp(-1))) < 4 * se

    def test_steps_validated(self):
        with pytest.raises(InvalidInput):
            simulate_path_euler(P, 0.0, 1.0, 0, stream(0, "e"))


class TestExactTransition:
    def test_mean(self):
        d = sample_exact_transition(P, 2.0, 0.5, stream(1, "x"), size=1_000_000)
        target = 2 * math.exp(-0.5) + (1 - math.exp(-0.5))
        assert target == pytest.approx(1.6065, abs=1e-4)
        assert transition_mean(P, 2.0, 0.5) == pytest.approx(target)
        assert abs(d.mean() - target) < 4 * d.std() / math.sqrt(d.size)

    def test_variance(self):
        d = sample_exact_transition(P, 2.0, 0.5, stream(2, "x"), size=1_000_000)
        v = transition_var(P, 2.0, 0.5)
        m4 = np.mean((d - d.mean()) ** 4)
        assert abs(d.var() - v) < 4 * math.sqrt((m4 - d.var() ** 2) / d.size)

    def test_long_horizon_is_stationary_gamma(self):
        from scipy import stats
        mu, s2 = 1.0, 1.0
        d = sample_exact_transition(CirParams(mu, -1.0, s2), 3.0, 40.0, stream(3, "x"), size=200_000)
        ks = stats.kstest(d, stats.gamma(2 * mu / s2, scale=s2 / 2).cdf)
        assert ks.pvalue > 0.001

    def test_absorbing_degenerate(self):
        p = CirParams(1e-300, -1.0, 1.0)
        assert np.all(sample_exact_transition(p, 0.0, 0.5, stream(4, "x"), size=1000) < 1e-200)

    def test_gamma_zero(self):
        p = CirParams(1.0, 0.0, 1.0)
        assert transition_mean(p, 2.0, 0.5) == 2.5
        d = sample_exact_transition(p, 2.0, 0.5, stream(5, "x"), size=400_000)
        assert abs(d.mean() - 2.5) < 4 * d.std() / math.sqrt(d.size)

    def test_noiseless(self):
        p = CirParams(1.0, -1.0, 0.0)
        y = sample_exact_transition(p, 2.0, 1.0, stream(6, "x"))
        assert y == pytest.approx(transition_mean(p, 2.0, 1.0))


class TestLtuLimit:
    def test_functional_solves_system(self):
        a, bv, i1, i2 = 2.0, 1.0, 0.3, -0.4
        x = ltu_functional(a, bv, i1, i2)
        assert np.allclose(np.array([[a, bv], [bv, 1.0]]) @ np.array(x), [i1, i2])
        assert ltu_functional(1.0, 1.0, 0.1, 0.1) is None

    def test_noiseless(self):
        tab = tabulate_ltu_limit(CirParams(1.0, -1.0, 0.0), 5, 200, seed=0)
        assert np.all(tab.samples == 0.0)

    def test_worker_invariance(self):
        a = tabulate_ltu_limit(P, 600, 100, seed=3, workers=1)
        b = tabulate_ltu_limit(P, 600, 100, seed=3, workers=2)
        assert np.array_equal(a.samples, b.samples)
        assert a.meta["resample_count"] == 0

    def test_small_table_moments(self):
        tab = tabulate_ltu_limit(P, 4000, 500, seed=1)
        m, v = tab.mean[0], tab.cov[0, 0]
        assert abs(m + 3.87) < 0.5 and abs(v - 18.0) < 3.0


class TestExplosiveLimit:
    def test_z_law_and_symmetry(self):
        tab = sample_explosive_limit(CirParams(1.0, 1.0, 1.0), 1_000_000, seed=2)
        draws, z = tab.samples[:, 0], tab.samples[:, 1]
        assert abs(z.mean() - 1.0) < 4 * z.std() / 1000
        assert abs(z.var() - 0.5) < 0.01
        assert abs(draws.mean()) < 4 * draws.std() / 1000

    def test_variance(self):
        assert explosive_limit_variance(1.0, 1.0) == pytest.approx(8 / 3)
        assert math.isinf(explosive_limit_variance(1.0, 2.0))
        tab = sample_explosive_limit(CirParams(1.0, 1.0, 1.0), 1_000_000, seed=3)
        assert tab.samples[:, 0].var() == pytest.approx(8 / 3, rel=0.05)

    def test_requires_explosive(self):
        with pytest.raises(InvalidInput):
            sample_explosive_limit(P, 10)


class TestLimitTable:
    def test_summary_recomputable(self, tmp_path):
        tab = tabulate_ltu_limit(P, 300, 50, seed=0)
        csv_path, json_path = tab.write(tmp_path, "t")
        back = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        assert np.array_equal(back, tab.samples)
        summ = json.loads(json_path.read_text())
        assert np.allclose(summ["mean"], back.mean(axis=0), rtol=1e-14)
        assert np.allclose(summ["cov"], np.cov(back, rowvar=False), rtol=1e-12)
        assert summ["resample_count"] == 0 and summ["steps"] == 50

    def test_single_draw(self):
        t = LimitTable(np.array([[1.0, 2.0]]), ("a", "b"))
        assert t.M == 1 and np.all(np.isnan(t.cov))
        with pytest.raises(InvalidInput):
            LimitTable(np.empty((0, 2)), ("a", "b"))
