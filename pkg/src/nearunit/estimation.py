"""Least-squares, weighted least-squares and Poisson quasi-likelihood fits of
``X_t = alpha X_{t-1} + mu + W_t``.

All closed-form fits share one weighted kernel (:func:`weighted_fit`), so OLS
and a random-weight bootstrap draw with unit weights are computed by the
same arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .errors import (BoundaryHit, DegenerateDesign, InsufficientData, InvalidInput,
                     NoConvergence, ZeroDenominator)

DET_RTOL = 1e-12
MU_FLOOR = 1e-8


def as_values(series) -> np.ndarray:
    values = getattr(series, "values", series)
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInput("series must be one-dimensional")
    return arr


@dataclass
class EstimateResult:
    alpha_hat: float
    mu_hat: float
    sigma2_hat: float
    residuals: np.ndarray = field(repr=False)
    method: str
    n: int
    k_hat: float | None = None
    tau_hat: float | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha_hat < 1.0:
            self.k_hat = 1.0 / (1.0 - self.alpha_hat)
            self.tau_hat = math.log(self.k_hat) / math.log(self.n) if self.n > 1 else None
        else:
            self.k_hat = None
            self.tau_hat = None

    def to_dict(self, residuals: bool = False) -> dict:
        out = {
            "method": self.method,
            "n": self.n,
            "alpha_hat": self.alpha_hat,
            "mu_hat": self.mu_hat,
            "sigma2_hat": self.sigma2_hat,
            "k_hat": self.k_hat,
            "tau_hat": self.tau_hat,
            "flags": self.flags,
        }
        if residuals:
            out["residuals"] = self.residuals.tolist()
        return out


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _weighted_moments(x, y, w):
    """Two-pass weighted moments: ``(sxx, sxy, sraw, mx, my, sw)``, centred."""
    sw = 0.0
    sx = 0.0
    sy = 0.0
    for t in range(x.shape[0]):
        sw += w[t]
        sx += w[t] * x[t]
        sy += w[t] * y[t]
    mx = sx / sw
    my = sy / sw
    sxx = 0.0
    sxy = 0.0
    sraw = 0.0
    for t in range(x.shape[0]):
        dx = x[t] - mx
        sxx += w[t] * dx * dx
        sxy += w[t] * dx * (y[t] - my)
        sraw += w[t] * x[t] * x[t]
    return sxx, sxy, sraw, mx, my, sw


@njit(cache=True)
def _solve(x, y, w):
    """Weighted LS ``(alpha, mu, ok)``; ``ok`` is False for a singular Gram matrix."""
    sxx, sxy, sraw, mx, my, sw = _weighted_moments(x, y, w)
    if not (sw > 0.0 and sraw > 0.0 and sxx > DET_RTOL * sraw):
        return np.nan, np.nan, False
    a = sxy / sxx
    return a, my - a * mx, True


def weighted_fit(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """Closed-form minimiser of ``sum w_t (y_t - alpha x_t - mu)^2``."""
    a, m, ok = _solve(np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(y, dtype=float),
                      np.ascontiguousarray(w, dtype=float))
    if not ok:
        raise DegenerateDesign("Gram matrix is singular: no variation in the lagged regressor")
    return a, m


@njit(cache=True)
def _deviation(x, innov):
    n = x.shape[0]
    mx = 0.0
    mw = 0.0
    for t in range(n):
        mx += x[t]
        mw += innov[t]
    mx /= n
    mw /= n
    sxx = 0.0
    sxw = 0.0
    for t in range(n):
        dx = x[t] - mx
        sxx += dx * dx
        sxw += dx * innov[t]
    da = sxw / sxx
    return da, mw - da * mx


def ols_deviation(series, innovations) -> tuple[float, float]:
    """``(alpha_hat - alpha_n, mu_hat - mu_n)`` computed from the true innovations.

    Algebraically equal to the OLS error, but free of the cancellation in
    ``X_t - alpha_n X_{t-1}`` that ruins the direct difference when the
    series is explosive.
    """
    x = as_values(series)[:-1]
    return _deviation(np.ascontiguousarray(x), np.ascontiguousarray(innovations, dtype=float))


# ---------------------------------------------------------------------------


def _split(series, min_n: int = 3):
    v = as_values(series)
    n = len(v) - 1
    if n < min_n:
        raise InsufficientData(f"need at least {min_n} transitions, got {n}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("series contains non-finite values")
    return v[:-1], v[1:], n


def sigma2_hat(series, alpha_hat: float, mu_hat: float) -> float:
    """``sum W_t^2 / sum X_{t-1}`` with raw (not df-corrected) sums."""
    x, y, _ = _split(series, 1)
    denom = x.sum()
    if not denom > 0:
        raise ZeroDenominator("all lagged values are zero")
    resid = y - alpha_hat * x - mu_hat
    return float(resid @ resid / denom)


def _result(x, y, n, a, m, method, flags=None) -> EstimateResult:
    resid = y - a * x - m
    denom = x.sum()
    s2 = float(resid @ resid / denom) if denom > 0 else math.nan
    return EstimateResult(float(a), float(m), s2, resid, method, n, flags=flags or {})


def ols(series) -> EstimateResult:
    """Ordinary least squares of ``X_t`` on ``(X_{t-1}, 1)``."""
    x, y, n = _split(series)
    a, m = weighted_fit(x, y, np.ones(n))
    return _result(x, y, n, a, m, "OLS")


def wls(series) -> EstimateResult:
    """Least squares weighted by ``1 / (1 + X_{t-1})``.

    Flags ``feller_warning`` when ``sigma2_hat >= 2 mu_hat``, where the
    estimator's limit theory is not available.
    """
    x, y, n = _split(series)
    if np.any(x < 0):
        raise InvalidInput("WLS weights need a nonnegative series")
    a, m = weighted_fit(x, y, 1.0 / (1.0 + x))
    res = _result(x, y, n, a, m, "WLS")
    res.flags["feller_warning"] = bool(res.sigma2_hat >= 2.0 * res.mu_hat)
    return res


def _poisson_loglik(x, y, a, m):
    lam = a * x + m
    if np.any(lam <= 0):
        return -np.inf
    return float(np.sum(y * np.log(lam) - lam))


def poisson_qmle(series, tol: float = 1e-8, max_iter: int = 100) -> EstimateResult:
    """Poisson quasi-maximum likelihood over ``alpha >= 0, mu > 0``.

    Damped Newton from the OLS start (projected into the feasible set); the
    line search is skipped once the predicted gain is below the rounding
    level of the log-likelihood. Converged when the score sup-norm is below ``tol``, or when a full Newton
    step no longer moves the iterate at machine precision.
    """
    x, y, n = _split(series)
    if np.any(x < 0) or y.min() < 0:
        raise InvalidInput("Poisson QML needs a nonnegative series")
    a, m = weighted_fit(x, y, np.ones(n))
    a = max(a, 0.0)
    m = max(m, 0.1 * max(y.mean(), MU_FLOOR))
    ll = _poisson_loglik(x, y, a, m)
    gnorm = math.inf
    for it in range(max_iter):
        lam = a * x + m
        r = y / lam - 1.0
        g = np.array([r @ x, r.sum()])
        gnorm = float(np.max(np.abs(g)))
        if gnorm < tol:
            break
        q = y / lam ** 2
        h = np.array([[q @ (x * x), q @ x], [q @ x, q.sum()]])
        try:
            d = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            d = g / max(np.abs(np.diag(h)).max(), 1.0)
        if abs(d[0]) <= 4e-16 * max(abs(a), 1.0) and abs(d[1]) <= 4e-16 * max(abs(m), 1.0):
            break
        t = 1.0
        if 0.5 * (g @ d) <= 1e-10 * max(1.0, abs(ll)):
            # gain below the resolution of the log-likelihood: plain Newton
            a_new, m_new = max(a + d[0], 0.0), max(m + d[1], MU_FLOOR)
            a, m, ll = a_new, m_new, _poisson_loglik(x, y, a_new, m_new)
            continue
        while t > 1e-12:
            a_new = max(a + t * d[0], 0.0)
            m_new = max(m + t * d[1], MU_FLOOR)
            ll_new = _poisson_loglik(x, y, a_new, m_new)
            if ll_new >= ll:
                break
            t *= 0.5
        else:
            break
        a, m, ll = a_new, m_new, ll_new
    else:
        raise NoConvergence(f"Poisson QML did not converge in {max_iter} iterations",
                            last=(a, m), grad_norm=gnorm)
    if m <= MU_FLOOR:
        raise BoundaryHit(f"intercept pinned at the floor {MU_FLOOR}")
    res = _result(x, y, n, a, m, "PoissonQML")
    res.flags["grad_norm"] = gnorm
    res.flags["iterations"] = it
    return res


def estimate(series, method: str = "ols") -> EstimateResult:
    method = method.lower()
    if method == "ols":
        return ols(series)
    if method == "wls":
        return wls(series)
    if method in ("poisson", "poissonqml", "qml"):
        return poisson_qmle(series)
    raise InvalidInput(f"unknown method {method!r}")


@dataclass
class VarianceExponent:
    a_hat: float
    ci_halfwidth: float
    r2: float
    n_used: int
    dropped: int


def variance_exponent(series, level: float = 0.95) -> VarianceExponent:
    """Slope of ``log W_t^2`` on ``log X_{t-1}`` from the OLS residuals.

    Points with ``X_{t-1} = 0`` or a zero residual are dropped (and
    counted). The half-width is the classical Student-t interval on the
    slope.
    """
    x, y, n = _split(series)
    fit = ols(series)
    keep = (x > 0) & (fit.residuals != 0)
    m = int(keep.sum())
    if m < 10:
        raise InsufficientData(f"only {m} usable points for the variance exponent")
    lx = np.log(x[keep])
    lw = np.log(fit.residuals[keep] ** 2)
    dx = lx - lx.mean()
    sxx = dx @ dx
    if not sxx > 0:
        raise InsufficientData("lagged levels do not vary")
    slope = (dx @ (lw - lw.mean())) / sxx
    icpt = lw.mean() - slope * lx.mean()
    e = lw - icpt - slope * lx
    rss = e @ e
    tss = (lw - lw.mean()) @ (lw - lw.mean())
    se = math.sqrt(rss / (m - 2) / sxx)
    q = stats.t.ppf(0.5 + level / 2, m - 2)
    return VarianceExponent(float(slope), float(q * se), float(1 - rss / tss) if tss > 0 else 0.0, m, n - m)
