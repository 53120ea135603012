"""Simulation studies: limit-law tables, coverage, power and bubble statistics.

Every replication ``r`` of a study draws from its own stream
``(seed, study_id, ..., r)``, so a report depends on the configuration and
seed only, never on the worker count. Each :class:`StudyReport` carries the
raw per-replication draws its summary was computed from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from . import jsonutil
from .affine import (AffineSpec, Family, RegimeKind, RegimeSpec, regime_from_config, resolve_alpha,
                     simulate_alpha, spec_from_config)
from .cir import CirParams, explosive_limit_variance, sample_explosive_limit, tabulate_ltu_limit
from .errors import ConfigError, InvalidInput
from .estimation import _deviation, _solve
from .inference import bootstrap, bootstrap_ci, plugin_covariance, wls_covariance
from .parallel import run_chunks
from .rng import derive_seed, stream

PROFILES: dict[str, dict[str, int]] = {
    "desk": {"M": 5000, "B": 5000, "N": 400, "limit_paths": 10000, "limit_steps": 1000},
    "paper": {"M": 50000, "B": 50000, "N": 400, "limit_paths": 100000, "limit_steps": 5000},
}

POWER_GRID = np.round(np.linspace(0.80, 1.00, 51), 3)
NOMINAL = 0.10


@dataclass
class ExperimentConfig:
    """Design of one study cell.

    ``options`` holds study-specific settings (``limit_paths``,
    ``plugin_sigma2``, ``methods``...); they are echoed into the report.
    """

    spec: AffineSpec
    regime: RegimeSpec | None
    n: int
    M: int = 5000
    B: int = 5000
    seed: int = 0
    x0: float = 0.0
    workers: int = 1
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.M < 1:
            raise InvalidInput("M must be at least 1")
        if self.n < 2:
            raise InvalidInput("n must be at least 2")
        if self.B < 0:
            raise InvalidInput("B must be nonnegative")

    @classmethod
    def from_profile(cls, profile: str, spec: AffineSpec, regime: RegimeSpec | None, n: int,
                     **kw) -> "ExperimentConfig":
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
        p = PROFILES[profile]
        options = {"limit_paths": p["limit_paths"], "limit_steps": p["limit_steps"], "profile": profile}
        options.update(kw.pop("options", {}))
        kw.setdefault("M", p["M"])
        kw.setdefault("B", p["B"])
        return cls(spec, regime, n, options=options, **kw)

    @classmethod
    def from_mapping(cls, cfg: dict[str, Any]) -> "ExperimentConfig":
        """Build from a parsed ``key = value`` config (see :func:`affine.parse_config`)."""
        spec = spec_from_config(cfg)
        regime = regime_from_config(cfg) if cfg.get("regime", "mild") != "none" else None
        profile = cfg.get("profile", "desk")
        kw = {k: int(cfg[k]) for k in ("M", "B", "seed", "workers") if k in cfg}
        if "x0" in cfg:
            kw["x0"] = float(cfg["x0"])
        if "n" not in cfg:
            raise ConfigError("config lacks 'n'")
        return cls.from_profile(profile, spec, regime, int(cfg["n"]), **kw)

    def to_dict(self) -> dict:
        reg = None
        if self.regime is not None:
            reg = {"kind": self.regime.kind.value, "gamma": self.regime.gamma,
                   "tau": self.regime.tau, "kn": self.regime.kn}
        return {"spec": {"family": self.spec.family.value, **self.spec.params()}, "regime": reg,
                "n": self.n, "M": self.M, "B": self.B, "seed": self.seed, "x0": self.x0,
                "workers": self.workers, "options": self.options}

    def alpha_kn(self) -> tuple[float, float | None]:
        if self.regime is None:
            raise InvalidInput("this study needs a regime")
        return resolve_alpha(self.regime, self.n)


@dataclass
class Table:
    labels: tuple[str, ...]
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.labels.index(name)]


@dataclass
class StudyReport:
    study: str
    config: dict
    summary: dict
    tables: dict[str, Table] = field(default_factory=dict)

    def histogram(self, table: str, column: str, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
        v = self.tables[table].column(column)
        v = v[np.isfinite(v)]
        if v.size == 0:
            return np.zeros(bins + 1), np.zeros(bins, dtype=int)
        counts, edges = np.histogram(v, bins=bins)
        return edges, counts

    def write(self, directory: str | Path, bins: int = 50) -> list[Path]:
        """Summary JSON, one raw-draw CSV per table and long-form histogram CSVs."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [jsonutil.dump({"study": self.study, "config": self.config, "summary": self.summary},
                               directory / f"{self.study}_summary.json")]
        for name, tab in self.tables.items():
            p = directory / f"{self.study}_{name}.csv"
            np.savetxt(p, tab.data, delimiter=",", fmt="%.17g", header=",".join(tab.labels), comments="")
            paths.append(p)
            rows = []
            for col in tab.labels:
                edges, counts = self.histogram(name, col, bins)
                rows += [f"{col},{edges[i]!r},{edges[i + 1]!r},{int(counts[i])}" for i in range(len(counts))]
            h = directory / f"{self.study}_{name}_hist.csv"
            h.write_text("column,bin_lo,bin_hi,count\n" + "\n".join(rows) + "\n")
            paths.append(h)
        return paths


# ---------------------------------------------------------------------------
# helpers


def _moments(a: np.ndarray, labels) -> dict:
    """Mean, variance and covariance of the finite rows of ``a``."""
    a = np.atleast_2d(a)
    a = a[np.all(np.isfinite(a), axis=1)]
    m = a.shape[0]
    out = {"labels": list(labels), "count": m, "mean": a.mean(axis=0).tolist() if m else None}
    if m >= 2:
        cov = np.atleast_2d(np.cov(a, rowvar=False))
        out["var"] = np.diag(cov).tolist()
        out["cov"] = cov.tolist()
        out["variance_undefined"] = False
    else:
        out["var"] = None
        out["cov"] = None
        out["variance_undefined"] = True
    return out


def _fit(v: np.ndarray, weighted: bool = False) -> tuple[float, float]:
    x = v[:-1]
    w = 1.0 / (1.0 + x) if weighted else np.ones(x.shape[0])
    a, m, ok = _solve(x, v[1:], w)
    return (a, m) if ok else (math.nan, math.nan)


def _sim(spec, alpha, n, x0, rng, innovations=False):
    return simulate_alpha(spec, alpha, n, x0, rng, innovations)


def _theory_cov(spec: AffineSpec, mu_n: float):
    try:
        return plugin_covariance(mu_n, spec.sigma2).tolist()
    except Exception:
        return None


def _plugin_sigma2(config: ExperimentConfig) -> float | None:
    """``None`` means estimate ``sigma2``; default fixes it for INARCH only."""
    choice = config.options.get("plugin_sigma2", "fixed" if config.spec.family is Family.INARCH else "estimated")
    if choice == "fixed":
        return config.spec.sigma2
    if choice == "estimated":
        return None
    return float(choice)


def _plugin_se(x, y, a, m, n, sigma2):
    """Plug-in ``(se_alpha, se_mu)``; NaN when ``alpha_hat >= 1`` or ``mu_hat <= 0``."""
    if not (a < 1.0 and m > 0.0):
        return math.nan, math.nan
    if sigma2 is None:
        denom = x.sum()
        r = y - a * x - m
        sigma2 = float(r @ r / denom) if denom > 0 else math.nan
        if not sigma2 > 0:
            return math.nan, math.nan
    cov = plugin_covariance(m, sigma2)
    gap = 1.0 - a
    return math.sqrt(cov[0, 0] * gap / n), math.sqrt(cov[1, 1] / (n * gap))


# ---------------------------------------------------------------------------
# local-to-unity distribution study


def _ltu_chunk(args):
    spec, alpha, mu_n, n, x0, seed, lo, hi = args
    out = np.empty((hi - lo, 4))
    for r in range(lo, hi):
        v, _ = _sim(spec, alpha, n, x0, stream(seed, "dist_ltu", r))
        a, m = _fit(v)
        out[r - lo] = n * (a - alpha), m - mu_n, a, m
    return out


def dist_study_ltu(config: ExperimentConfig) -> StudyReport:
    """Draws of ``(n (alpha_hat - alpha_n), mu_hat - mu_n)`` under a local-to-unity regime.

    Sample moments are set against a tabulation of the CIR limit with
    ``options["limit_paths"]`` paths (0 disables it). With ``B > 0`` the
    bootstrap law of ``n (alpha^b - alpha_hat)`` on replication 0 is added.
    """
    if config.regime is None or config.regime.kind is not RegimeKind.LOCAL_TO_UNITY:
        raise InvalidInput("dist_study_ltu needs a local-to-unity regime")
    alpha, _ = config.alpha_kn()
    mu_n = config.spec.coefficients(alpha)[0]
    n = config.n
    parts = run_chunks(_ltu_chunk, config.M, (config.spec, alpha, mu_n, n, config.x0, config.seed),
                       workers=config.workers)
    draws = np.concatenate(parts)
    labels = ("n_alpha_dev", "mu_dev", "alpha_hat", "mu_hat")
    tables = {"draws": Table(labels, draws)}
    summary: dict[str, Any] = {
        "alpha_n": alpha, "mu_n": mu_n,
        "sample": _moments(draws[:, :2], labels[:2]),
        "degenerate_count": int(np.sum(~np.isfinite(draws[:, 0]))),
    }
    paths = int(config.options.get("limit_paths", 0))
    if paths > 0 and config.spec.sigma2 > 0:
        steps = int(config.options.get("limit_steps", 1000))
        lim = tabulate_ltu_limit(CirParams(mu_n, config.regime.gamma, config.spec.sigma2), paths, steps,
                                 seed=derive_seed(config.seed, "dist_ltu_limit"), workers=config.workers)
        tables["limit"] = Table(lim.labels, lim.samples)
        lm = _moments(lim.samples, lim.labels)
        s = summary["sample"]
        z = []
        for j in range(2):
            se = math.sqrt(s["var"][j] / s["count"] + lm["var"][j] / lm["count"]) if s["var"] else math.nan
            z.append((s["mean"][j] - lm["mean"][j]) / se if se > 0 else math.nan)
        summary["limit"] = {**lm, "steps": steps, "resample_count": lim.meta["resample_count"]}
        summary["mean_discrepancy_se"] = z
    if config.B > 0:
        bd = bootstrap(_replay_ltu(config, alpha, 0), B=config.B, seed=derive_seed(config.seed, "dist_ltu_boot"),
                       workers=config.workers)
        col = n * (bd.draws[:, 0] - bd.base[0])
        tables["bootstrap"] = Table(("n_alpha_boot_dev",), col[:, None])
        summary["bootstrap"] = {**_moments(col[:, None], ("n_alpha_boot_dev",)), "replication": 0,
                                "skewness": float(stats.skew(col))}
    summary["skewness"] = [float(stats.skew(draws[np.isfinite(draws[:, j]), j])) for j in range(2)]
    return StudyReport("dist_ltu", config.to_dict(), summary, tables)


def _replay_ltu(config, alpha, r):
    v, _ = _sim(config.spec, alpha, config.n, config.x0, stream(config.seed, "dist_ltu", r))
    return v


# ---------------------------------------------------------------------------
# mildly stationary distribution study


def _mild_chunk(args):
    spec, alpha, kn, mu_n, n, x0, seed, sigma2, with_wls, lo, hi = args
    out = np.full((hi - lo, 8), np.nan)
    sa, sm = math.sqrt(n * kn), math.sqrt(n / kn)
    for r in range(lo, hi):
        v, _ = _sim(spec, alpha, n, x0, stream(seed, "dist_mild", r))
        a, m = _fit(v)
        row = out[r - lo]
        row[0], row[1] = sa * (a - alpha), sm * (m - mu_n)
        if a < 1.0:
            g = 1.0 - a
            row[2], row[3] = math.sqrt(n / g) * (a - alpha), math.sqrt(n * g) * (m - mu_n)
        row[4], row[5] = a, m
        if with_wls:
            aw, mw = _fit(v, weighted=True)
            row[6], row[7] = sa * (aw - alpha), sm * (mw - mu_n)
    return out


def dist_study_mild(config: ExperimentConfig) -> StudyReport:
    """Benchmark, plug-in and bootstrap rescalings in the mildly stationary regime.

    Columns: ``sqrt(n k_n) (alpha_hat - alpha_n)``, ``sqrt(n / k_n) (mu_hat - mu_n)``,
    their plug-in versions with ``k_n`` replaced by ``1 / (1 - alpha_hat)``
    (NaN when ``alpha_hat >= 1``), and, with ``options["wls"]``, the WLS
    benchmark pair. The bootstrap column uses replication 0.
    """
    reg = config.regime
    if reg is None or reg.kind is not RegimeKind.MILDLY_INTEGRATED or reg.gamma != -1:
        raise InvalidInput("dist_study_mild needs a mildly stationary regime (gamma = -1)")
    alpha, kn = config.alpha_kn()
    mu_n = config.spec.coefficients(alpha)[0]
    n = config.n
    with_wls = bool(config.options.get("wls", False))
    args = (config.spec, alpha, kn, mu_n, n, config.x0, config.seed, None, with_wls)
    draws = np.concatenate(run_chunks(_mild_chunk, config.M, args, workers=config.workers))
    labels = ("bench_alpha", "bench_mu", "plugin_alpha", "plugin_mu", "alpha_hat", "mu_hat",
              "wls_alpha", "wls_mu")
    skipped = int(np.sum(~np.isfinite(draws[:, 2])))
    summary: dict[str, Any] = {
        "alpha_n": alpha, "k_n": kn, "mu_n": mu_n,
        "benchmark": _moments(draws[:, :2], labels[:2]),
        "plugin": {**_moments(draws[:, 2:4], labels[2:4]), "skip_count": skipped,
                   "skip_rate": skipped / config.M},
        "theory_cov": _theory_cov(config.spec, mu_n),
    }
    if with_wls:
        summary["wls"] = _moments(draws[:, 6:8], labels[6:8])
        try:
            summary["wls_theory_cov"] = wls_covariance(mu_n, config.spec.sigma2).tolist()
        except InvalidInput:
            summary["wls_theory_cov"] = None
    tables = {"draws": Table(labels, draws)}
    if config.B > 0:
        v, _ = _sim(config.spec, alpha, n, config.x0, stream(config.seed, "dist_mild", 0))
        bd = bootstrap(v, B=config.B, seed=derive_seed(config.seed, "dist_mild_boot"), workers=config.workers)
        resc = bd.rescaled(kn)
        tables["bootstrap"] = Table(("boot_alpha", "boot_mu"), resc)
        summary["bootstrap"] = {**_moments(resc, ("boot_alpha", "boot_mu")), "replication": 0,
                                "redraws": bd.meta["redraws"]}
    return StudyReport("dist_mild", config.to_dict(), summary, tables)


# ---------------------------------------------------------------------------
# mildly explosive distribution study


def _explosive_chunk(args):
    spec, alpha, kn, n, x0, seed, lo, hi = args
    out = np.empty((hi - lo, 3))
    scale = kn * alpha ** (n / 2)
    for r in range(lo, hi):
        v, w = _sim(spec, alpha, n, x0, stream(seed, "dist_explosive", r), innovations=True)
        da, dm = _deviation(np.ascontiguousarray(v[:-1]), w)
        out[r - lo] = scale * da, dm, v[-1] / (kn * alpha ** n)
    return out


def dist_study_explosive(config: ExperimentConfig) -> StudyReport:
    """Draws of ``k_n alpha_n^{n/2} (alpha_hat - alpha_n)`` and ``mu_hat - mu_n`` for ``gamma = +1``.

    Estimation errors are computed from the recorded innovations, which
    avoids the cancellation in ``X_t - alpha_n X_{t-1}`` at explosive
    levels. The sample is compared with direct draws of the mixed-normal
    limit.
    """
    reg = config.regime
    if reg is None or reg.kind is not RegimeKind.MILDLY_INTEGRATED or reg.gamma != 1:
        raise InvalidInput("dist_study_explosive needs a mildly explosive regime (gamma = +1)")
    alpha, kn = config.alpha_kn()
    n = config.n
    args = (config.spec, alpha, kn, n, config.x0, config.seed)
    draws = np.concatenate(run_chunks(_explosive_chunk, config.M, args, workers=config.workers))
    labels = ("scaled_alpha_dev", "mu_dev", "terminal_ratio")
    mu_n = config.spec.coefficients(alpha)[0]
    s2 = config.spec.sigma2
    summary: dict[str, Any] = {"alpha_n": alpha, "k_n": kn, "mu_n": mu_n,
                               "sample": _moments(draws, labels)}
    if s2 > 0:
        lim = sample_explosive_limit(CirParams(mu_n, 1.0, s2), config.M, seed=derive_seed(config.seed, "explosive"))
        summary["limit"] = {"mean": float(lim.samples[:, 0].mean()), "var": float(lim.samples[:, 0].var(ddof=1)),
                            "theory_mean": 0.0, "theory_var": explosive_limit_variance(mu_n, s2)}
        summary["terminal_theory"] = {"mean": mu_n, "var": mu_n * s2 / 2}
    return StudyReport("dist_explosive", config.to_dict(), summary, {"draws": Table(labels, draws)})


# ---------------------------------------------------------------------------
# coverage


def _coverage_chunk(args):
    spec, alpha, n, x0, seed, B, sigma2, lo, hi = args
    out = np.full((hi - lo, 6), np.nan)
    for r in range(lo, hi):
        v, _ = _sim(spec, alpha, n, x0, stream(seed, "coverage", r))
        x, y = v[:-1], v[1:]
        a, m = _fit(v)
        row = out[r - lo]
        row[0], row[1] = a, m
        if not math.isfinite(a):
            continue
        row[2], row[3] = _plugin_se(x, y, a, m, n, sigma2)
        if B > 0:
            ci = bootstrap_ci(bootstrap(v, B=B, seed=derive_seed(seed, "coverage_boot", r)))
            row[4], row[5] = ci.se_alpha, ci.se_mu
    return out


def _covers(est, se, truth, z, cap=False):
    lo = est - z * se
    hi = est + z * se
    if cap:
        hi = np.minimum(hi, 1.0)
    with np.errstate(invalid="ignore"):
        ok = (lo <= truth) & (truth <= hi)
    # an infinite interval covers even when the point estimate is finite
    return np.where(np.isinf(z) & np.isfinite(se), True, ok)


def coverage_study(config: ExperimentConfig, levels=(0.90,)) -> StudyReport:
    """Containment rates of plug-in and bootstrap-normal intervals for ``(alpha_n, mu_n)``.

    ``config.M`` is the number of replications. Plug-in intervals are
    undefined when ``alpha_hat >= 1``; those replications are excluded from
    the plug-in rate and also reported counted as misses.
    """
    reg = config.regime
    if reg is None or reg.gamma != -1:
        raise InvalidInput("coverage_study needs gamma = -1")
    for lv in levels:
        if not 0 < lv <= 1:
            raise InvalidInput("levels must lie in (0, 1]")
    alpha, kn = config.alpha_kn()
    mu_n = config.spec.coefficients(alpha)[0]
    sigma2 = _plugin_sigma2(config)
    args = (config.spec, alpha, config.n, config.x0, config.seed, config.B, sigma2)
    draws = np.concatenate(run_chunks(_coverage_chunk, config.M, args, workers=config.workers, chunk=50))
    labels = ("alpha_hat", "mu_hat", "plugin_se_alpha", "plugin_se_mu", "boot_se_alpha", "boot_se_mu")
    methods = {"plugin": (2, 3)}
    if config.B > 0:
        methods["bootstrap"] = (4, 5)
    table: dict[str, Any] = {}
    for lv in levels:
        z = float(stats.norm.ppf(0.5 + lv / 2))
        for name, (ia, im) in methods.items():
            valid = np.isfinite(draws[:, ia]) & np.isfinite(draws[:, im])
            nv = int(valid.sum())
            ca = _covers(draws[valid, 0], draws[valid, ia], alpha, z, cap=True)
            cm = _covers(draws[valid, 1], draws[valid, im], mu_n, z)
            rate_a = float(ca.mean()) if nv else math.nan
            rate_m = float(cm.mean()) if nv else math.nan
            table[f"{lv:g}/{name}"] = {
                "level": lv, "method": name, "alpha": rate_a, "mu": rate_m, "valid": nv,
                "skipped": config.M - nv,
                "alpha_counting_skips_as_misses": float(ca.sum()) / config.M,
                "mu_counting_skips_as_misses": float(cm.sum()) / config.M,
                "binomial_se_alpha": math.sqrt(rate_a * (1 - rate_a) / nv) if nv else math.nan,
            }
    summary = {"alpha_n": alpha, "k_n": kn, "mu_n": mu_n, "N": config.M,
               "plugin_sigma2": "estimated" if sigma2 is None else sigma2, "coverage": table}
    return StudyReport("coverage", config.to_dict(), summary, {"draws": Table(labels, draws)})


# ---------------------------------------------------------------------------
# power


def _alpha_key(a: float) -> int:
    return int(round(a * 1_000_000))


def _power_chunk(args):
    spec, alpha, n, x0, seed, B, sigma2, lo, hi = args
    out = np.full((hi - lo, 4), np.nan)
    key = _alpha_key(alpha)
    for r in range(lo, hi):
        v, _ = _sim(spec, alpha, n, x0, stream(seed, "power", n, key, r))
        a, m = _fit(v)
        row = out[r - lo]
        row[0], row[1] = alpha, a
        if not math.isfinite(a):
            continue
        row[2] = _plugin_se(v[:-1], v[1:], a, m, n, sigma2)[0]
        if B > 0:
            row[3] = bootstrap_ci(bootstrap(v, B=B, seed=derive_seed(seed, "power_boot", n, key, r))).se_alpha
    return out


def power_study(config: ExperimentConfig, alpha0_values=(0.95, 0.99), alpha_grid=None,
                methods=("PluginSE", "BootstrapSE")) -> StudyReport:
    """Raw and size-corrected rejection rates of ``H0: alpha = alpha0`` over a grid of true ``alpha``.

    Each true ``alpha`` is a fixed-coefficient DGP with ``config.M``
    replications of length ``config.n``. The size-corrected critical value
    for ``(alpha0, method)`` is the 90% quantile of ``|t|`` in the
    ``alpha = alpha0`` cell (linear interpolation between order statistics);
    ``alpha0`` values missing from the grid are simulated as extra cells.
    Replications without a standard error (plug-in with ``alpha_hat >= 1``)
    are excluded and counted.
    """
    grid = POWER_GRID if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    alpha0_values = tuple(float(a) for a in alpha0_values)
    for a0 in alpha0_values:
        if not a0 < 1:
            raise InvalidInput("alpha0 must be below one")
    for mth in methods:
        if mth not in ("PluginSE", "BootstrapSE"):
            raise InvalidInput(f"unknown method {mth!r}")
    B = config.B if "BootstrapSE" in methods else 0
    cells = sorted(set(np.round(grid, 9).tolist()) | set(alpha0_values))
    sigma2 = _plugin_sigma2(config)
    parts = []
    for a in cells:
        args = (config.spec, a, config.n, config.x0, config.seed, B, sigma2)
        parts += run_chunks(_power_chunk, config.M, args, workers=config.workers, chunk=50)
    draws = np.concatenate(parts)
    labels = ("alpha", "alpha_hat", "plugin_se", "boot_se")
    crit = float(stats.norm.ppf(1 - NOMINAL / 2))
    curves: dict[str, Any] = {}
    cell_col = draws[:, 0]
    for mth in methods:
        se_col = draws[:, 2] if mth == "PluginSE" else draws[:, 3]
        for a0 in alpha0_values:
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.abs((draws[:, 1] - a0) / se_col)
            h0 = t[(cell_col == a0) & np.isfinite(t)]
            c_emp = float(np.quantile(h0, 1 - NOMINAL)) if h0.size else math.nan
            raw, corr, valid = [], [], []
            for a in cells:
                tc = t[(cell_col == a) & np.isfinite(t)]
                valid.append(int(tc.size))
                raw.append(float(np.mean(tc > crit)) if tc.size else math.nan)
                corr.append(float(np.mean(tc > c_emp)) if tc.size else math.nan)
            curves[f"{mth}/{a0:g}"] = {
                "method": mth, "alpha0": a0, "alpha": cells, "raw": raw, "size_corrected": corr,
                "critical_value": c_emp, "nominal_critical_value": crit, "valid": valid,
            }
    summary = {"n": config.n, "N": config.M, "B": B, "nominal": NOMINAL, "curves": curves,
               "plugin_sigma2": "estimated" if sigma2 is None else sigma2}
    return StudyReport("power", config.to_dict(), summary, {"draws": Table(labels, draws)})


# ---------------------------------------------------------------------------
# bubble-like episodes


def _bubble_chunk(args):
    spec, comp, alpha, n, x0, seed, blocks, lo, hi = args
    size = n // blocks
    out = np.empty(((hi - lo) * blocks, 5))
    i = 0
    for r in range(lo, hi):
        v, _ = _sim(spec, alpha, n, x0, stream(seed, "bubble", r))
        u, _ = _sim(comp, alpha, n, x0, stream(seed, "bubble_ar1", r))
        for j in range(blocks):
            blk = v[1 + j * size: 1 + (j + 1) * size]
            out[i] = r, j, blk.max(), _fit(blk)[0], u[1 + j * size: 1 + (j + 1) * size].max()
            i += 1
    return out


def bubble_study(config: ExperimentConfig, block_count: int = 10, threshold_multiple: float = 3.0,
                 comparator_sigma_eps: float = 1.0) -> StudyReport:
    """Block maxima of a mildly stationary path against ``threshold_multiple`` times its marginal mean.

    Reports (i) the probability that some block maximum exceeds the
    threshold, (ii) among exceeding blocks, the share whose block OLS
    ``alpha_hat <= 1``, and (iii) statistic (i) for a linear AR(1) with the
    same ``alpha_n`` and intercept and innovation s.d. ``comparator_sigma_eps``.
    """
    reg = config.regime
    if reg is None or reg.gamma != -1:
        raise InvalidInput("bubble_study needs gamma = -1")
    if block_count < 1 or config.n % block_count:
        raise InvalidInput(f"n={config.n} is not divisible into {block_count} blocks")
    alpha, kn = config.alpha_kn()
    mu_n = config.spec.coefficients(alpha)[0]
    mean = mu_n / (1.0 - alpha)
    thr = threshold_multiple * mean
    comp = AffineSpec(Family.LINEAR_AR1, mu=mu_n, sigma_eps=comparator_sigma_eps)
    args = (config.spec, comp, alpha, config.n, config.x0, config.seed, block_count)
    rows = np.concatenate(run_chunks(_bubble_chunk, config.M, args, workers=config.workers, chunk=50))
    labels = ("replication", "block", "block_max", "block_alpha_hat", "ar1_block_max")
    summary = {"alpha_n": alpha, "k_n": kn, "marginal_mean": mean, "threshold": thr,
               "block_length": config.n // block_count, **bubble_statistics(rows, block_count, thr)}
    return StudyReport("bubble", config.to_dict(), summary, {"blocks": Table(labels, rows)})


def bubble_statistics(rows: np.ndarray, block_count: int, threshold: float) -> dict:
    """Statistics (i)-(iii) from the per-block table."""
    exceed = rows[:, 2] > threshold
    per_rep = exceed.reshape(-1, block_count).any(axis=1)
    ar1_rep = (rows[:, 4] > threshold).reshape(-1, block_count).any(axis=1)
    n_exc = int(exceed.sum())
    le1 = int(np.sum(rows[exceed, 3] <= 1.0))
    return {
        "p_any_exceed": float(per_rep.mean()),
        "exceeding_blocks": n_exc,
        "share_exceeding_with_alpha_le_1": le1 / n_exc if n_exc else math.nan,
        "ar1_p_any_exceed": float(ar1_rep.mean()),
        "replications": int(per_rep.size),
    }


# ---------------------------------------------------------------------------
# scaling limits of the linear AR(1) and the explosive affine process


def _ar1_chunk(args):
    spec, alpha, kn, n, x0, seed, s_grid, mu, lo, hi = args
    t_idx = np.floor(kn * s_grid).astype(np.int64)
    target = mu * (1.0 - np.exp(-s_grid))
    out = np.empty((hi - lo, 3))
    for r in range(lo, hi):
        v, _ = _sim(spec, alpha, n, x0, stream(seed, "ar1_limit", n, r))
        out[r - lo] = n, r, np.max(np.abs(v[t_idx] / kn - target))
    return out


def _terminal_chunk(args):
    spec, alpha, kn, n, x0, seed, lo, hi = args
    out = np.empty((hi - lo, 1))
    norm = kn * alpha ** n
    for r in range(lo, hi):
        v, _ = _sim(spec, alpha, n, x0, stream(seed, "explosive_terminal", r))
        out[r - lo] = v[-1] / norm
    return out


def ar1_limit_check(config: ExperimentConfig, n_values=None, s_max: float = 5.0, grid_points: int = 500,
                    explosive_spec: AffineSpec | None = None) -> StudyReport:
    """Check the deterministic fluid limit of a mildly stationary AR(1) and the
    gamma limit of an explosive affine process.

    For each ``n`` the sup over ``s`` in ``(0, s_max]`` of
    ``|X_{floor(k_n s)} / k_n - mu (1 - e^{-s})|`` is averaged over
    replications. The explosive part simulates ``explosive_spec`` (default
    INARCH with the AR(1) intercept) at ``gamma = +1`` and size ``config.n``,
    and compares ``X_n / (k_n alpha_n^n)`` with the gamma law of mean ``mu``
    and variance ``mu sigma^2 / 2``.
    """
    spec = config.spec
    if spec.family is not Family.LINEAR_AR1:
        raise InvalidInput("ar1_limit_check needs a LinearAR1 spec")
    reg = config.regime
    if reg is None or reg.kind is not RegimeKind.MILDLY_INTEGRATED:
        raise InvalidInput("ar1_limit_check needs a mildly integrated regime")
    stat_reg = RegimeSpec.mild(-1.0, tau=reg.tau, kn=reg.kn)
    n_values = [config.n] if n_values is None else [int(v) for v in n_values]
    rows, means = [], {}
    for n in n_values:
        alpha, kn = resolve_alpha(stat_reg, n)
        smax = min(s_max, n / kn)
        s_grid = np.linspace(smax / grid_points, smax, grid_points)
        args = (spec, alpha, kn, n, config.x0, config.seed, s_grid, spec.mu)
        part = np.concatenate(run_chunks(_ar1_chunk, config.M, args, workers=config.workers))
        rows.append(part)
        means[str(n)] = {"k_n": kn, "mean_sup_deviation": float(part[:, 2].mean()), "s_max": smax}
    sups = [means[str(n)]["mean_sup_deviation"] for n in n_values]
    summary: dict[str, Any] = {"sup_deviation": means,
                               "decreasing_in_n": bool(all(b < a for a, b in zip(sups, sups[1:])))}
    tables = {"sup_deviation": Table(("n", "replication", "sup_deviation"), np.concatenate(rows))}

    espec = explosive_spec or AffineSpec(Family.INARCH, mu=spec.mu)
    exp_reg = RegimeSpec.mild(1.0, tau=reg.tau, kn=reg.kn)
    alpha, kn = resolve_alpha(exp_reg, config.n)
    args = (espec, alpha, kn, config.n, config.x0, config.seed)
    term = np.concatenate(run_chunks(_terminal_chunk, config.M, args, workers=config.workers))
    mu_n = espec.coefficients(alpha)[0]
    summary["explosive"] = {
        "family": espec.family.value, "n": config.n, "k_n": kn, "alpha_n": alpha,
        "mean": float(term.mean()), "var": float(term.var(ddof=1)) if config.M > 1 else None,
        "theory_mean": mu_n, "theory_var": mu_n * espec.sigma2 / 2,
    }
    tables["explosive_terminal"] = Table(("ratio",), term)
    return StudyReport("ar1_limit", config.to_dict(), summary, tables)


STUDIES = {
    "dist_ltu": dist_study_ltu,
    "dist_mild": dist_study_mild,
    "dist_explosive": dist_study_explosive,
    "coverage": coverage_study,
    "power": power_study,
    "bubble": bubble_study,
    "ar1_limit": ar1_limit_check,
}
