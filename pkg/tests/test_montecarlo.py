import json
import math

import numpy as np
import pytest

from nearunit.affine import AffineSpec, Family, RegimeSpec
from nearunit.errors import ConfigError, InvalidInput
from nearunit.montecarlo import (POWER_GRID, PROFILES, ExperimentConfig, ar1_limit_check, bubble_statistics,
                                 bubble_study, coverage_study, dist_study_explosive, dist_study_ltu,
                                 dist_study_mild, power_study)

INARCH = AffineSpec(Family.INARCH, mu=1.0)
MILD = RegimeSpec.mild(-1.0, tau=0.4)


def cfg(regime, n, M, B=0, **kw):
    return ExperimentConfig(INARCH, regime, n, M=M, B=B, **kw)


class TestConfig:
    def test_profiles(self):
        assert PROFILES["desk"]["M"] == 5000 and PROFILES["paper"]["M"] == 50_000
        c = ExperimentConfig.from_profile("desk", INARCH, MILD, 3000)
        assert (c.M, c.B) == (5000, 5000) and c.options["limit_paths"] == 10_000
        with pytest.raises(ConfigError):
            ExperimentConfig.from_profile("huge", INARCH, MILD, 3000)

    def test_from_mapping(self):
        c = ExperimentConfig.from_mapping({"family": "INARCH", "mu": "1", "tau": "0.4", "n": "300", "M": "20"})
        assert c.M == 20 and c.alpha_kn()[1] == pytest.approx(300 ** 0.4)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({"family": "INARCH", "mu": "1", "tau": "0.4"})

    def test_validation(self):
        with pytest.raises(InvalidInput):
            cfg(MILD, 100, 0)

    def test_power_grid(self):
        assert len(POWER_GRID) == 51 and POWER_GRID[0] == 0.8 and POWER_GRID[-1] == 1.0
        assert np.allclose(np.diff(POWER_GRID), 0.004)


class TestDistStudies:
    def test_ltu_single_replication(self):
        rep = dist_study_ltu(cfg(RegimeSpec.local(-1.0), 300, 1))
        s = rep.summary["sample"]
        assert s["variance_undefined"] is True and s["var"] is None
        assert s["mean"] == pytest.approx(rep.tables["draws"].data[0, :2].tolist())

    def test_ltu_determinism_across_workers(self):
        a = dist_study_ltu(cfg(RegimeSpec.local(-1.0), 300, 600, B=100, workers=1))
        b = dist_study_ltu(cfg(RegimeSpec.local(-1.0), 300, 600, B=100, workers=2))
        assert np.array_equal(a.tables["draws"].data, b.tables["draws"].data)
        assert np.array_equal(a.tables["bootstrap"].data, b.tables["bootstrap"].data)

    def test_ltu_limit_comparison(self):
        c = cfg(RegimeSpec.local(-1.0), 500, 400, options={"limit_paths": 400, "limit_steps": 200})
        rep = dist_study_ltu(c)
        assert rep.summary["limit"]["count"] == 400
        assert len(rep.summary["mean_discrepancy_se"]) == 2

    def test_regime_checks(self):
        with pytest.raises(InvalidInput):
            dist_study_ltu(cfg(MILD, 300, 2))
        with pytest.raises(InvalidInput):
            dist_study_mild(cfg(RegimeSpec.local(-1.0), 300, 2))
        with pytest.raises(InvalidInput):
            dist_study_explosive(cfg(MILD, 300, 2))

    def test_mild_columns(self):
        rep = dist_study_mild(cfg(MILD, 500, 200, B=200, options={"wls": True}))
        d = rep.tables["draws"]
        alpha, kn = rep.summary["alpha_n"], rep.summary["k_n"]
        a = d.column("alpha_hat")
        assert np.allclose(d.column("bench_alpha"), math.sqrt(500 * kn) * (a - alpha))
        ok = a < 1
        assert np.allclose(d.column("plugin_alpha")[ok], np.sqrt(500 / (1 - a[ok])) * (a[ok] - alpha))
        assert np.all(np.isnan(d.column("plugin_alpha")[~ok]))
        assert np.allclose(rep.summary["theory_cov"], [[4, -3], [-3, 3]])
        assert rep.summary["wls_theory_cov"][0][0] == 2.0
        assert rep.tables["bootstrap"].data.shape == (200, 2)

    def test_explosive_small(self):
        rep = dist_study_explosive(cfg(RegimeSpec.mild(1.0, tau=0.5), 400, 200))
        assert rep.summary["limit"]["theory_var"] == pytest.approx(8 / 3)
        assert np.all(np.isfinite(rep.tables["draws"].data))


class TestReports:
    def test_write_and_recompute(self, tmp_path):
        rep = dist_study_mild(cfg(MILD, 400, 150))
        paths = rep.write(tmp_path)
        names = {p.name for p in paths}
        assert {"dist_mild_summary.json", "dist_mild_draws.csv", "dist_mild_draws_hist.csv"} <= names
        back = np.genfromtxt(tmp_path / "dist_mild_draws.csv", delimiter=",", names=True)
        summ = json.loads((tmp_path / "dist_mild_summary.json").read_text())
        bench = np.column_stack([back["bench_alpha"], back["bench_mu"]])
        assert np.allclose(summ["summary"]["benchmark"]["mean"], bench.mean(axis=0), rtol=1e-13)
        assert np.allclose(summ["summary"]["benchmark"]["cov"], np.cov(bench, rowvar=False), rtol=1e-12)
        hist = (tmp_path / "dist_mild_draws_hist.csv").read_text().splitlines()
        assert hist[0] == "column,bin_lo,bin_hi,count"
        counts = [int(r.split(",")[3]) for r in hist[1:] if r.startswith("bench_alpha,")]
        assert sum(counts) == 150


class TestCoverage:
    def test_level_one_covers(self):
        rep = coverage_study(cfg(MILD, 300, 30, B=50), levels=(1.0, 0.9))
        for m in ("plugin", "bootstrap"):
            row = rep.summary["coverage"][f"1/{m}"]
            assert row["alpha"] == 1.0 and row["mu"] == 1.0

    def test_counts(self):
        rep = coverage_study(cfg(RegimeSpec.mild(-1.0, tau=0.8), 75, 100, B=0))
        row = rep.summary["coverage"]["0.9/plugin"]
        assert row["valid"] + row["skipped"] == 100
        assert row["alpha_counting_skips_as_misses"] <= row["alpha"] + 1e-12
        assert "0.9/bootstrap" not in rep.summary["coverage"]

    def test_determinism(self):
        a = coverage_study(cfg(MILD, 200, 60, B=40, workers=1))
        b = coverage_study(cfg(MILD, 200, 60, B=40, workers=2))
        assert np.array_equal(a.tables["draws"].data, b.tables["draws"].data, equal_nan=True)

    def test_requires_stationary_side(self):
        with pytest.raises(InvalidInput):
            coverage_study(cfg(RegimeSpec.mild(1.0, tau=0.4), 200, 5))


class TestPower:
    def test_calibration_identity(self):
        rep = power_study(cfg(None, 300, 200), alpha0_values=(0.95,), alpha_grid=[0.85, 0.9, 0.95],
                          methods=("PluginSE",))
        cur = rep.summary["curves"]["PluginSE/0.95"]
        i = cur["alpha"].index(0.95)
        assert abs(cur["size_corrected"][i] - 0.10) <= 1.0 / cur["valid"][i] + 1e-12

    def test_alpha0_added_as_cell(self):
        rep = power_study(cfg(None, 200, 40), alpha0_values=(0.93,), alpha_grid=[0.9, 0.96],
                          methods=("PluginSE",))
        assert 0.93 in rep.summary["curves"]["PluginSE/0.93"]["alpha"]

    def test_rejects(self):
        with pytest.raises(InvalidInput):
            power_study(cfg(None, 200, 5), alpha0_values=(1.0,))
        with pytest.raises(InvalidInput):
            power_study(cfg(None, 200, 5), methods=("SandwichSE",))


class TestBubble:
    def test_statistics(self):
        # 2 replications x 2 blocks: (rep, block, max, alpha_hat, ar1 max)
        rows = np.array([[0, 0, 5.0, 0.9, 1.0], [0, 1, 1.0, 1.1, 1.0],
                         [1, 0, 2.0, 0.9, 4.0], [1, 1, 4.0, 1.2, 1.0]])
        s = bubble_statistics(rows, 2, 3.0)
        assert s["p_any_exceed"] == 1.0
        assert s["exceeding_blocks"] == 2
        assert s["share_exceeding_with_alpha_le_1"] == 0.5
        assert s["ar1_p_any_exceed"] == 0.5

    def test_small_run(self):
        c = ExperimentConfig(INARCH, RegimeSpec.mild(-1.0, kn=20.0), 1000, M=20)
        rep = bubble_study(c)
        assert rep.summary["marginal_mean"] == pytest.approx(20.0)
        assert rep.tables["blocks"].data.shape == (200, 5)

    def test_blocks_must_divide(self):
        c = ExperimentConfig(INARCH, RegimeSpec.mild(-1.0, kn=20.0), 1001, M=2)
        with pytest.raises(InvalidInput):
            bubble_study(c)


class TestAr1Limit:
    def test_noiseless_discretization(self):
        spec = AffineSpec(Family.LINEAR_AR1, mu=1.0, sigma_eps=0.0)
        c = ExperimentConfig(spec, RegimeSpec.mild(-1.0, kn=10.0), 200, M=2)
        rep = ar1_limit_check(c, n_values=[200])
        assert rep.summary["sup_deviation"]["200"]["mean_sup_deviation"] < 2 / 10

    def test_needs_linear(self):
        with pytest.raises(InvalidInput):
            ar1_limit_check(cfg(MILD, 200, 2))
