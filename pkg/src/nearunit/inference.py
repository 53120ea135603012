"""Feasible inference on ``(alpha_n, mu_n)`` in the mildly stationary regime.

Two routes to a standard error for the least-squares estimator:

* plug-in: the gamma-invariant-law covariance ``Omega^{-1} Sigma Omega^{-1}``
  evaluated at ``(mu_hat, sigma2_hat)`` and rescaled with
  ``k_hat = 1 / (1 - alpha_hat)``;
* random-weight bootstrap: ``B`` weighted least-squares refits with i.i.d.
  positive weights of mean one and variance one.

A heteroskedasticity-robust sandwich standard error is available as a third
option. Confidence intervals for ``alpha_n`` are capped at one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .cir import stationary_moments
from .errors import AlphaAtOrAboveOne, DegenerateDesign, InvalidInput, SingularOmega
from .estimation import EstimateResult, _solve, as_values, ols
from .rng import stream

DEFAULT_LEVELS = (0.01, 0.05, 0.10)
DEFAULT_GRID = np.round(np.arange(0.700, 0.9995, 0.001), 3)


def _z(level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 2))


def _cap_interval(lo: float, hi: float) -> tuple[tuple[float, float], bool]:
    lo, hi = float(lo), float(hi)
    return (lo, min(hi, 1.0)), bool(hi > 1.0)


# ---------------------------------------------------------------------------
# plug-in


def plugin_covariance_entries(mu, sigma2):
    """Entries ``(c11, c12, c22)`` of ``Omega^{-1} Sigma Omega^{-1}``.

    Written as plain arithmetic so exact (``Fraction``) inputs give exact
    output.
    """
    m1, m2, m3 = stationary_moments(mu, sigma2)
    det = m2 - m1 * m1
    if not det > 0:
        raise SingularOmega(f"Omega is singular (m2 - m1^2 = {det})")
    # Omega^{-1} = [[1, -m1], [-m1, m2]] / det
    i11, i12, i22 = 1 / det, -m1 / det, m2 / det
    s11, s12, s22 = sigma2 * m3, sigma2 * m2, sigma2 * m1
    # P = Omega^{-1} Sigma
    p11 = i11 * s11 + i12 * s12
    p12 = i11 * s12 + i12 * s22
    p21 = i12 * s11 + i22 * s12
    p22 = i12 * s12 + i22 * s22
    c11 = p11 * i11 + p12 * i12
    c12 = p11 * i12 + p12 * i22
    c22 = p21 * i12 + p22 * i22
    return c11, c12, c22


def plugin_covariance(mu_hat: float, sigma2_hat: float) -> np.ndarray:
    """Asymptotic covariance of the ``(sqrt(n k_n), sqrt(n / k_n))``-scaled OLS error."""
    if not (mu_hat > 0 and sigma2_hat > 0):
        raise InvalidInput("plug-in covariance needs positive mu and sigma2")
    c11, c12, c22 = plugin_covariance_entries(float(mu_hat), float(sigma2_hat))
    return np.array([[c11, c12], [c12, c22]])


def wls_covariance(mu: float, sigma2: float) -> np.ndarray:
    """Limit covariance of the scaled WLS error, ``sigma2 [[mu, 1], [1, 1/(mu - sigma2/2)]]^{-1}``.

    Requires ``2 mu > sigma2``; the ``alpha`` entry is always 2.
    """
    if not 2 * mu > sigma2 > 0:
        raise InvalidInput("WLS limit needs 2 mu > sigma2 > 0")
    gap = mu - sigma2 / 2
    return np.array([[2.0, -2.0 * gap], [-2.0 * gap, 2.0 * mu * gap]])


@dataclass
class PluginInference:
    cov: np.ndarray
    se_alpha: float
    se_mu: float
    ci_alpha: tuple[float, float]
    ci_mu: tuple[float, float]
    scalings: tuple[float, float]
    capped: bool
    level: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cov": self.cov.tolist(),
            "se_alpha": self.se_alpha,
            "se_mu": self.se_mu,
            "ci_alpha": list(self.ci_alpha),
            "ci_mu": list(self.ci_mu),
            "scalings": list(self.scalings),
            "capped": self.capped,
            "level": self.level,
            **self.meta,
        }


def plugin_ci(est: EstimateResult, level: float = 0.90, sigma2: float | None = None) -> PluginInference:
    """Normal intervals with ``k_n`` replaced by ``1 / (1 - alpha_hat)``.

    ``sigma2`` fixes the variance parameter (e.g. 1 for INARCH) instead of
    using ``est.sigma2_hat``.

    Raises
    ------
    AlphaAtOrAboveOne
        When ``alpha_hat >= 1``; use the bootstrap instead.
    """
    if not 0 < level < 1:
        raise InvalidInput("level must lie in (0, 1)")
    if est.alpha_hat >= 1.0:
        raise AlphaAtOrAboveOne(f"alpha_hat={est.alpha_hat:.6g} >= 1: plug-in scaling undefined")
    s2 = est.sigma2_hat if sigma2 is None else float(sigma2)
    if not est.mu_hat > 0:
        raise SingularOmega(f"mu_hat={est.mu_hat:.6g} is not positive")
    cov = plugin_covariance(est.mu_hat, s2)
    gap = 1.0 - est.alpha_hat
    n = est.n
    se_a = math.sqrt(cov[0, 0] * gap / n)
    se_m = math.sqrt(cov[1, 1] / (n * gap))
    z = _z(level)
    ci_a, capped = _cap_interval(est.alpha_hat - z * se_a, est.alpha_hat + z * se_a)
    ci_m = (est.mu_hat - z * se_m, est.mu_hat + z * se_m)
    meta = {"sigma2_used": s2, "sigma2_source": "estimated" if sigma2 is None else "fixed",
            "moments_at": "raw (mu_hat, sigma2)"}
    return PluginInference(cov, se_a, se_m, ci_a, ci_m, (math.sqrt(n / gap), math.sqrt(n * gap)),
                           capped, level, meta)


# ---------------------------------------------------------------------------
# sandwich


@dataclass
class SandwichSE:
    se_alpha: float
    se_mu: float
    M_hat: np.ndarray
    S_hat: np.ndarray

    def __iter__(self):
        return iter((self.se_alpha, self.se_mu, self.M_hat, self.S_hat))


def sandwich_se(series, est: EstimateResult | None = None) -> SandwichSE:
    """Heteroskedasticity-robust ``n^{-1} M^{-1} S M^{-1}`` standard errors."""
    v = as_values(series)
    est = ols(v) if est is None else est
    x = v[:-1]
    n = len(x)
    z = np.column_stack([x, np.ones(n)])
    m_hat = z.T @ z / n
    s_hat = (z * (est.residuals ** 2)[:, None]).T @ z / n
    det = m_hat[0, 0] * m_hat[1, 1] - m_hat[0, 1] ** 2
    if not det > 1e-12 * m_hat[0, 0]:
        raise DegenerateDesign("sandwich: design matrix is singular")
    m_inv = np.linalg.inv(m_hat)
    var = m_inv @ s_hat @ m_inv / n
    return SandwichSE(math.sqrt(max(var[0, 0], 0.0)), math.sqrt(max(var[1, 1], 0.0)), m_hat, s_hat)


# ---------------------------------------------------------------------------
# random-weight bootstrap

WEIGHTS = ("Exp1", "Degenerate1")


def _boot_chunk(args):
    x, y, dist, seed, lo, hi = args
    out = np.empty((hi - lo, 2))
    ones = np.ones(x.shape[0])
    redraws = 0
    for b in range(lo, hi):
        attempt = 0
        while True:
            if dist == 0:
                w = stream(seed, "bootstrap", b, attempt).standard_exponential(x.shape[0])
            else:
                w = ones
            a, m, ok = _solve(x, y, w)
            if ok:
                break
            if dist == 1:
                raise DegenerateDesign("unit weights give a singular design")
            attempt += 1
            redraws += 1
            if attempt > 100:
                raise DegenerateDesign("bootstrap draw repeatedly singular")
        out[b - lo] = a, m
    return out, redraws


@dataclass
class BootstrapDraws:
    draws: np.ndarray
    weights_dist: str
    B: int
    base: tuple[float, float]
    n: int
    meta: dict = field(default_factory=dict)

    def rescaled(self, kn: float) -> np.ndarray:
        """``(sqrt(n k_n) (a^b - a_hat), sqrt(n / k_n) (m^b - m_hat))``."""
        d = self.draws - np.asarray(self.base)
        return d * np.array([math.sqrt(self.n * kn), math.sqrt(self.n / kn)])


def bootstrap(series, B: int = 5000, weights_dist: str | Callable = "Exp1", seed: int = 0,
              workers: int = 1) -> BootstrapDraws:
    """Random-weight bootstrap of the OLS estimator.

    Draw ``b`` takes its weights from stream ``(seed, "bootstrap", b)``.
    ``weights_dist`` is ``"Exp1"``, ``"Degenerate1"`` or a callable
    ``f(rng, n)`` returning positive weights with mean and variance one.
    """
    from .parallel import run_chunks

    v = as_values(series)
    base = ols(v)
    if B < 1:
        raise InvalidInput("B must be at least 1")
    x = np.ascontiguousarray(v[:-1])
    y = np.ascontiguousarray(v[1:])
    if callable(weights_dist):
        draws, redraws = _boot_custom(x, y, weights_dist, B, seed)
        name = getattr(weights_dist, "__name__", "custom")
    else:
        if weights_dist not in WEIGHTS:
            raise InvalidInput(f"unknown weight distribution {weights_dist!r}")
        dist = WEIGHTS.index(weights_dist)
        parts = run_chunks(_boot_chunk, B, (x, y, dist, int(seed)), workers=workers, chunk=1000)
        draws = np.concatenate([p[0] for p in parts])
        redraws = sum(p[1] for p in parts)
        name = weights_dist
    return BootstrapDraws(draws, name, B, (base.alpha_hat, base.mu_hat), base.n,
                          {"redraws": redraws, "seed": seed})


def _boot_custom(x, y, fn, B, seed):
    out = np.empty((B, 2))
    redraws = 0
    for b in range(B):
        attempt = 0
        while True:
            w = np.ascontiguousarray(fn(stream(seed, "bootstrap", b, attempt), len(x)), dtype=float)
            if np.any(w < 0):
                raise InvalidInput("bootstrap weights must be nonnegative")
            a, m, ok = _solve(x, y, w)
            if ok:
                break
            attempt += 1
            redraws += 1
            if attempt > 100:
                raise DegenerateDesign("bootstrap draw repeatedly singular")
        out[b] = a, m
    return out, redraws


@dataclass
class BootstrapCI:
    ci_alpha: tuple[float, float]
    ci_mu: tuple[float, float]
    se_alpha: float
    se_mu: float
    capped: bool
    percentile_alpha: tuple[float, float]
    percentile_mu: tuple[float, float]
    level: float

    def __iter__(self):
        return iter((self.ci_alpha, self.ci_mu, self.se_alpha, self.se_mu))

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def bootstrap_ci(draws: BootstrapDraws, level: float = 0.90) -> BootstrapCI:
    """Normal-approximation interval ``base +- z * sd_boot``, alpha capped at one.

    Percentile intervals are returned alongside for comparison.
    """
    d = draws.draws
    if draws.B >= 2:
        sd = d.std(axis=0, ddof=1)
        # identical draws: the two-pass std leaves rounding residue
        sd[np.ptp(d, axis=0) == 0] = 0.0
    else:
        sd = np.zeros(2)
    a, m = draws.base
    z = _z(level)
    ci_a, capped = _cap_interval(a - z * sd[0], a + z * sd[0])
    q = (0.5 - level / 2, 0.5 + level / 2)
    pa = tuple(float(v) for v in np.quantile(d[:, 0], q))
    pm = tuple(float(v) for v in np.quantile(d[:, 1], q))
    return BootstrapCI(ci_a, (float(m - z * sd[1]), float(m + z * sd[1])), float(sd[0]), float(sd[1]), capped,
                       (pa[0], min(pa[1], 1.0)), pm, level)


# ---------------------------------------------------------------------------
# tests and p-value curves

METHODS = ("PluginSE", "BootstrapSE", "SandwichSE")


@dataclass
class TestResult:
    alpha0: float
    t_stat: float
    p_value: float
    method: str
    se: float
    decision_at: dict

    def to_dict(self) -> dict:
        return {**self.__dict__, "decision_at": {f"{k:g}": v for k, v in self.decision_at.items()}}


def p_value(t: float) -> float:
    """Two-sided normal p-value ``2 (1 - Phi(|t|))``."""
    return float(2.0 * stats.norm.sf(abs(t)))


def alpha_se(series, method: str = "PluginSE", est: EstimateResult | None = None, *, B: int = 5000,
             seed: int = 0, sigma2: float | None = None, workers: int = 1) -> float:
    """Standard error of ``alpha_hat`` by the chosen method."""
    est = ols(series) if est is None else est
    if method == "PluginSE":
        return plugin_ci(est, sigma2=sigma2).se_alpha
    if method == "BootstrapSE":
        return bootstrap_ci(bootstrap(series, B=B, seed=seed, workers=workers)).se_alpha
    if method == "SandwichSE":
        return sandwich_se(series, est).se_alpha
    raise InvalidInput(f"unknown method {method!r}; expected one of {METHODS}")


def _decide(p: float, levels) -> dict:
    return {float(lv): bool(p < lv) for lv in levels}


def test_alpha(series, alpha0: float, method: str = "PluginSE", levels=DEFAULT_LEVELS, *,
               se: float | None = None, est: EstimateResult | None = None, **kw) -> TestResult:
    """Two-sided t-test of ``alpha_n = alpha0`` (``alpha0 < 1``)."""
    if not alpha0 < 1.0:
        raise InvalidInput("alpha0 must be strictly below one")
    est = ols(series) if est is None else est
    if se is None:
        se = alpha_se(series, method, est, **kw)
    t = (est.alpha_hat - alpha0) / se if se > 0 else (0.0 if est.alpha_hat == alpha0 else math.copysign(math.inf, est.alpha_hat - alpha0))
    p = p_value(t)
    return TestResult(float(alpha0), float(t), p, method, float(se), _decide(p, levels))


test_alpha.__test__ = False
TestResult.__test__ = False


@dataclass
class PValueCurve:
    alpha0: np.ndarray
    p: np.ndarray
    method: str
    se: float
    alpha_hat: float
    region: tuple[float, float] | None
    reaches_upper: bool

    def rows(self):
        return list(zip(self.alpha0.tolist(), self.p.tolist()))


def pvalue_curve(series, grid=None, method: str = "PluginSE", threshold: float = 0.10, *,
                 se: float | None = None, **kw) -> PValueCurve:
    """``p(alpha0)`` over ``grid`` and the non-rejection region at ``threshold``.

    The region spans the non-rejected grid points; when it reaches the top
    of the grid its upper end is reported as 1 (the cap on ``alpha_n``).
    A precomputed ``se`` skips the standard-error step.
    """
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidInput("grid is empty")
    if np.any(grid >= 1.0):
        raise InvalidInput("grid points must be below one")
    est = ols(series)
    if se is None:
        se = alpha_se(series, method, est, **kw)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (est.alpha_hat - grid) / se
    t = np.where(grid == est.alpha_hat, 0.0, t)
    p = 2.0 * stats.norm.sf(np.abs(t))
    keep = grid[p >= threshold]
    reaches = bool(keep.size and keep.max() == grid.max())
    region = None
    if keep.size:
        region = (float(keep.min()), 1.0 if reaches else float(keep.max()))
    return PValueCurve(grid, p, method, float(se), est.alpha_hat, region, reaches)
