import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nearunit.affine import (AffineSpec, Family, RegimeSpec, conditional_moments, config_text, marginal_mean,
                             parse_config, regime_from_config, resolve_alpha, simulate, spec_from_config, step)
from nearunit.errors import ConfigError, InvalidInput, NotStationary, RegimeInfeasible
from nearunit.rng import stream

INARCH = AffineSpec(Family.INARCH, mu=1.0)
ARG = AffineSpec(Family.ARG, c=0.5, kappa=2.0)


def mean_var_se(d):
    m, v = d.mean(), d.var()
    m4 = np.mean((d - m) ** 4)
    return m, v, math.sqrt(v / d.size), math.sqrt(max(m4 - v * v, 0.0) / d.size)


class TestResolveAlpha:
    def test_local_to_unity(self):
        a, k = resolve_alpha(RegimeSpec.local(1.0), 100)
        assert a == pytest.approx(1.01, abs=1e-15)
        assert k is None

    def test_mild_sqrt(self):
        a, k = resolve_alpha(RegimeSpec.mild(-1.0, tau=0.5), 100)
        assert k == pytest.approx(10.0, rel=1e-14)
        assert a == pytest.approx(0.9, rel=1e-14)

    def test_mild_tau04_n3000(self):
        # independent arithmetic: exp(0.4 ln 3000)
        kn = math.exp(0.4 * math.log(3000.0))
        a, k = resolve_alpha(RegimeSpec.mild(-1.0, tau=0.4), 3000)
        assert k == pytest.approx(24.5951, abs=1e-4)
        assert k == pytest.approx(kn, rel=1e-14)
        assert a == pytest.approx(0.959341, abs=1e-6)

    def test_gamma_normalized_to_sign(self):
        assert RegimeSpec.mild(-3.5, tau=0.5).gamma == -1.0
        assert RegimeSpec.mild(0.2, tau=0.5).gamma == 1.0

    def test_kn_override(self):
        a, k = resolve_alpha(RegimeSpec.mild(-1.0, kn=100.0), 10_000)
        assert (a, k) == (0.99, 100.0)

    @pytest.mark.parametrize("regime,n", [
        (RegimeSpec.mild(-1.0, tau=0.1), 100),      # k_n = 1.58 < 2
        (RegimeSpec.mild(-1.0, kn=50.0), 50),       # k_n = n
        (RegimeSpec.local(-1.0), 1),
    ])
    def test_infeasible(self, regime, n):
        with pytest.raises(RegimeInfeasible):
            resolve_alpha(regime, n)

    def test_bad_tau(self):
        with pytest.raises(InvalidInput):
            RegimeSpec.mild(-1.0, tau=1.2)
        with pytest.raises(InvalidInput):
            RegimeSpec.mild(0.0, tau=0.5)


class TestConditionalMoments:
    def test_inarch_equidispersion(self):
        assert conditional_moments(INARCH, 0.9, 10) == pytest.approx((10.0, 10.0))

    def test_arg(self):
        assert conditional_moments(ARG, 1.0, 4) == pytest.approx((5.0, 4.5))

    def test_arg0(self):
        spec = AffineSpec(Family.ARG0, theta=2.0, b=0.5)
        assert conditional_moments(spec, 0.98, 3) == pytest.approx((3.94, 15.76))

    def test_nbar(self):
        spec = AffineSpec(Family.NBAR, kappa=1.0)
        assert conditional_moments(spec, 0.95, 20) == pytest.approx((0.95 * 21, 1.95 * 0.95 * 21))

    def test_linear_constant_variance(self):
        spec = AffineSpec(Family.LINEAR_AR1, mu=1.0, sigma_eps=2.0)
        assert conditional_moments(spec, 0.5, 0)[1] == conditional_moments(spec, 0.5, 100)[1] == 4.0

    def test_negative_state(self):
        with pytest.raises(InvalidInput):
            conditional_moments(INARCH, 0.9, -1)

    @pytest.mark.parametrize("spec,sigma2", [
        (INARCH, 1.0),
        (AffineSpec(Family.NBAR, kappa=2.0), 2.0),
        (ARG, 1.0),
        (AffineSpec(Family.ARG0, theta=0.7, b=1.0), 1.4),
    ])
    def test_beta_limit(self, spec, sigma2):
        _, beta, _ = spec.coefficients(0.999)
        assert spec.sigma2 == sigma2
        assert abs(beta / sigma2 - 1) < 0.002

    def test_arg_limits(self):
        mu, _, delta = ARG.coefficients(1.0)
        assert (mu, delta) == (1.0, 0.5)


class TestSpecValidation:
    @pytest.mark.parametrize("kw", [
        dict(family="INARCH"),
        dict(family="INARCH", mu=0.0),
        dict(family="ARG", c=1.0, kappa=-1.0),
        dict(family="ARG0", theta=0.0, b=1.0),
        dict(family="LinearAR1", mu=1.0),
        dict(family="NBAR", kappa=float("nan")),
    ])
    def test_rejects(self, kw):
        with pytest.raises(InvalidInput):
            AffineSpec(**kw)

    def test_arg0_b_zero_allowed(self):
        assert AffineSpec("ARG0", theta=1.0, b=0.0).b == 0.0


class TestStep:
    def test_inarch_mean(self):
        d = step(INARCH, 0.99, 50, stream(1, "t"), size=1_000_000)
        m, _, se, _ = mean_var_se(d)
        assert abs(m - 50.5) < 3 * se

    def test_nbar_variance(self):
        d = step(AffineSpec(Family.NBAR, kappa=1.0), 0.95, 20, stream(2, "t"), size=1_000_000)
        _, v, _, se_v = mean_var_se(d)
        assert abs(v - 38.9025) < 4 * se_v

    def test_arg0_zero_intensity(self):
        spec = AffineSpec(Family.ARG0, theta=2.0, b=0.0)
        assert np.all(step(spec, 0.9, 0.0, stream(3, "t"), size=10_000) == 0.0)

    def test_support(self):
        g = stream(4, "t")
        for spec in (INARCH, AffineSpec(Family.NBAR, kappa=1.5)):
            d = step(spec, 0.95, 7, g, size=50_000)
            assert np.all(d >= 0) and np.all(d == np.round(d))
        assert np.all(step(ARG, 0.95, 0.0, g, size=50_000) > 0)

    def test_arg0_zero_mass(self):
        spec = AffineSpec(Family.ARG0, theta=1.0, b=0.3)
        d = step(spec, 0.9, 1.0, stream(5, "t"), size=400_000)
        p = math.exp(-(0.9 * 1.0 + 0.3))
        phat = np.mean(d == 0)
        assert abs(phat - p) < 4 * math.sqrt(p * (1 - p) / d.size)
        assert np.all(d >= 0)

    def test_gamma_shape_below_one(self):
        # ARG with kappa < 1 and x = 0 draws Gamma(kappa) only
        spec = AffineSpec(Family.ARG, c=1.0, kappa=0.3)
        d = step(spec, 0.9, 0.0, stream(6, "t"), size=400_000)
        m, v, se, se_v = mean_var_se(d)
        assert abs(m - 0.3) < 4 * se and abs(v - 0.3) < 4 * se_v

    def test_huge_intensity_stays_finite(self):
        # beyond the int64 range of a direct Poisson sampler
        d = step(INARCH, 1.0, 1e20, stream(7, "t"), size=1000)
        assert np.all(np.isfinite(d)) and np.all(d > 0)
        assert abs(d.mean() / 1e20 - 1) < 1e-8


class TestSimulate:
    def test_empty(self):
        tr = simulate(INARCH, RegimeSpec.local(-1.0), 0, x0=4)
        assert tr.values.tolist() == [4.0] and tr.n == 0

    def test_deterministic_recursion(self):
        spec = AffineSpec(Family.LINEAR_AR1, mu=1.0, sigma_eps=0.0)
        tr = simulate(spec, 0.9, 3)
        assert tr.values == pytest.approx([0, 1, 1.9, 2.71], abs=1e-15)

    def test_long_run_mean(self):
        tr = simulate(INARCH, RegimeSpec.mild(-1.0, kn=100.0), 10_000, seed=3)
        assert abs(tr.values.mean() / 100 - 1) < 0.10

    def test_count_values_are_integers(self):
        tr = simulate(INARCH, RegimeSpec.mild(-1.0, tau=0.5), 500, seed=1)
        assert tr.values.dtype == np.int64
        assert len(tr.values) == 501 and tr.values.min() >= 0

    def test_provenance(self):
        tr = simulate(ARG, RegimeSpec.mild(-1.0, tau=0.5), 100, x0=1.0, seed=9, stream=4)
        assert tr.provenance["seed"] == 9 and tr.provenance["stream"] == 4
        assert tr.provenance["k_n"] == pytest.approx(10.0)

    def test_reproducible(self):
        reg = RegimeSpec.mild(-1.0, tau=0.5)
        a = simulate(ARG, reg, 300, x0=1.0, seed=5, stream=2).values
        b = simulate(ARG, reg, 300, x0=1.0, seed=5, stream=2).values
        c = simulate(ARG, reg, 300, x0=1.0, seed=5, stream=3).values
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_innovations_recorded(self):
        tr = simulate(INARCH, 0.9, 200, x0=5, seed=2, keep_innovations=True)
        v = tr.values.astype(float)
        assert np.allclose(tr.innovations, v[1:] - 0.9 * v[:-1] - 1.0)

    def test_rejects(self):
        with pytest.raises(InvalidInput):
            simulate(INARCH, 0.9, 10, x0=-1)
        with pytest.raises(InvalidInput):
            simulate(INARCH, 0.9, 10, x0=1.5)
        with pytest.raises(RegimeInfeasible):
            simulate(INARCH, RegimeSpec.mild(-1.0, tau=0.1), 10)

    def test_explosive_path_grows(self):
        tr = simulate(INARCH, RegimeSpec.mild(1.0, tau=0.5), 5000, seed=1)
        v = tr.values.astype(float)
        assert np.all(np.isfinite(v)) and v[-1] > 1e25
        # no wrap-around: the tail keeps growing by about alpha_n per step
        r = v[-100:] / v[-101:-1]
        assert np.all(np.abs(r - (1 + 1 / math.sqrt(5000))) < 1e-6)


class TestMarginalMean:
    def test_values(self):
        assert marginal_mean(INARCH, 0.99) == pytest.approx(100.0)
        assert marginal_mean(ARG, 0.9) == pytest.approx(10.0)

    def test_not_stationary(self):
        with pytest.raises(NotStationary):
            marginal_mean(INARCH, 1.0)


class TestConfig:
    def test_round_trip(self):
        reg = RegimeSpec.mild(-1.0, tau=0.4)
        cfg = parse_config(config_text(ARG, reg, n=3000))
        assert spec_from_config(cfg) == ARG
        assert regime_from_config(cfg) == reg
        assert cfg["n"] == "3000"

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# model\nfamily = INARCH  # Poisson\n\nmu = 2\n")
        assert spec_from_config(cfg).mu == 2.0

    def test_errors(self):
        with pytest.raises(ConfigError):
            parse_config("family INARCH")
        with pytest.raises(ConfigError):
            spec_from_config({"mu": "1"})
        with pytest.raises(ConfigError):
            spec_from_config({"family": "INARCH", "mu": "-1"})
        with pytest.raises(ConfigError):
            regime_from_config({"regime": "weird"})


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.0, 1.2), x=st.floats(0.0, 1e4), mu=st.floats(0.01, 50.0))
def test_moment_coefficients_are_affine(alpha, x, mu):
    for spec in (AffineSpec("INARCH", mu=mu), AffineSpec("ARG", c=mu / 10 + 0.01, kappa=2.0),
                 AffineSpec("ARG0", theta=mu / 10 + 0.01, b=0.5), AffineSpec("NBAR", kappa=mu)):
        m0, v0 = conditional_moments(spec, alpha, 0.0)
        m1, v1 = conditional_moments(spec, alpha, x)
        mu_n, beta_n, delta_n = spec.coefficients(alpha)
        assert m1 == pytest.approx(alpha * x + m0) and m0 == pytest.approx(mu_n)
        assert v1 == pytest.approx(beta_n * x + v0) and v0 == pytest.approx(delta_n)
        assert v1 >= 0
