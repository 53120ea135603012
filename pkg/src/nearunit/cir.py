"""CIR diffusion ``dY = (mu + gamma Y) ds + sigma sqrt(Y) dB``.

Provides the stationary moments of the mean-reverting case, full-truncation
Euler paths, the exact noncentral-gamma transition, and Monte Carlo
tabulations of two limit laws of the least-squares estimator:

* the local-to-unity functional
  ``[[int Y^2, int Y], [int Y, 1]]^{-1} [sigma int Y^{3/2} dB, sigma int Y^{1/2} dB]``
  on ``[0, 1]`` started at zero;
* the mildly explosive mixture ``(2 / sqrt 3) sigma Z^{-1/2} N`` with
  ``Z ~ Gamma(2 mu / sigma^2, scale sigma^2 / 2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import InvalidInput
from .parallel import run_chunks
from .rng import stream

QUANTILE_GRID = (0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99)
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class CirParams:
    mu: float
    gamma: float
    sigma2: float

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInput("mu must be positive")
        if not self.sigma2 >= 0:
            raise InvalidInput("sigma2 must be nonnegative")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass
class LimitTable:
    """``M`` draws of a ``d``-dimensional limit law plus summaries."""

    samples: np.ndarray
    labels: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] < 1:
            raise InvalidInput("LimitTable needs at least one draw")

    @property
    def M(self) -> int:
        return self.samples.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def cov(self) -> np.ndarray:
        if self.M < 2:
            return np.full((self.samples.shape[1],) * 2, np.nan)
        return np.atleast_2d(np.cov(self.samples, rowvar=False))

    def quantiles(self, probs=QUANTILE_GRID) -> np.ndarray:
        return np.quantile(self.samples, probs, axis=0)

    def summary(self) -> dict:
        q = self.quantiles()
        return {
            "labels": list(self.labels),
            "M": self.M,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "quantiles": {f"{p:g}": q[i].tolist() for i, p in enumerate(QUANTILE_GRID)},
            **self.meta,
        }

    def write(self, directory: str | Path, stem: str = "limit") -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{stem}_draws.csv"
        json_path = directory / f"{stem}_summary.json"
        np.savetxt(csv_path, self.samples, delimiter=",", fmt="%.17g",
                   header=",".join(self.labels), comments="")
        json_path.write_text(json.dumps(self.summary(), indent=2))
        return csv_path, json_path


def stationary_moments(mu: float, sigma2: float) -> tuple[float, float, float]:
    """First three moments of the gamma invariant law for ``gamma = -1``.

    Pure arithmetic, so :class:`fractions.Fraction` inputs stay exact.
    """
    m1 = mu
    m2 = mu * (mu + sigma2 / 2)
    m3 = m2 * (mu + sigma2)
    return m1, m2, m3


def feller_check(mu: float, sigma2: float) -> bool:
    """True when ``2 mu >= sigma2`` (zero is not revisited)."""
    return 2.0 * mu >= sigma2


# ---------------------------------------------------------------------------
# Euler


@njit(cache=True)
def _euler_fill(mu, gamma, sigma, y0, h, dB, out):
    y = y0
    out[0] = y0
    for j in range(dB.shape[0]):
        yp = y if y > 0.0 else 0.0
        y = y + (mu + gamma * yp) * h + sigma * math.sqrt(yp) * dB[j]
        # full truncation keeps the drift/diffusion at max(y, 0); the
        # emitted path is reported on the same truncated scale
        out[j + 1] = y if y > 0.0 else 0.0


def simulate_path_euler(params: CirParams, y0: float, horizon: float, steps: int,
                        rng: np.random.Generator | None = None, increments: np.ndarray | None = None):
    """Full-truncation Euler path on ``[0, horizon]``.

    Returns ``(path, increments)`` where ``increments`` are the Brownian
    increments used, so stochastic integrals can reuse the same noise.
    Supplying ``increments`` bypasses the generator.
    """
    if steps < 1:
        raise InvalidInput("steps must be at least 1")
    h = horizon / steps
    if increments is None:
        increments = math.sqrt(h) * rng.standard_normal(steps)
    increments = np.asarray(increments, dtype=float)
    path = np.empty(steps + 1)
    _euler_fill(params.mu, params.gamma, params.sigma, float(y0), h, increments, path)
    return path, increments


@njit(cache=True)
def _euler_terminal(gen, mu, gamma, sigma, y0, h, steps, out):
    sh = math.sqrt(h)
    for i in range(out.shape[0]):
        y = y0
        for _ in range(steps):
            yp = y if y > 0.0 else 0.0
            y = y + (mu + gamma * yp) * h + sigma * math.sqrt(yp) * sh * gen.standard_normal()
        out[i] = y if y > 0.0 else 0.0


def euler_terminal(params: CirParams, y0: float, horizon: float, steps: int, size: int,
                   rng: np.random.Generator) -> np.ndarray:
    """``size`` independent Euler draws of the state at ``horizon``."""
    out = np.empty(size)
    _euler_terminal(rng, params.mu, params.gamma, params.sigma, float(y0), horizon / steps, steps, out)
    return out


# ---------------------------------------------------------------------------
# exact transition


def transition_mean(params: CirParams, y: float, h: float) -> float:
    g = params.gamma
    if g == 0.0:
        return y + params.mu * h
    e = math.exp(g * h)
    return y * e + params.mu * (e - 1.0) / g


def transition_var(params: CirParams, y: float, h: float) -> float:
    g, mu, s2 = params.gamma, params.mu, params.sigma2
    if g == 0.0:
        return s2 * h * (y + mu * h / 2.0)
    e = math.exp(g * h)
    return y * s2 * e * (e - 1.0) / g + mu * s2 * (e - 1.0) ** 2 / (2.0 * g * g)


@njit(cache=True)
def _exact_scale(gamma, sigma2, h):
    if gamma == 0.0:
        return sigma2 * h / 2.0
    return sigma2 * math.expm1(gamma * h) / (2.0 * gamma)


@njit(cache=True)
def _exact_one(gen, mu, gamma, sigma2, h, y):
    if sigma2 == 0.0:
        if gamma == 0.0:
            return y + mu * h
        e = math.exp(gamma * h)
        return y * e + mu * (e - 1.0) / gamma
    c = _exact_scale(gamma, sigma2, h)
    lam = y * math.exp(gamma * h) / c
    nmix = float(gen.poisson(lam)) if lam > 0.0 else 0.0
    shape = 2.0 * mu / sigma2 + nmix
    if shape <= 0.0:
        return 0.0
    return gen.gamma(shape, c)


@njit(cache=True)
def _exact_draws(gen, mu, gamma, sigma2, h, y, out):
    for i in range(out.shape[0]):
        out[i] = _exact_one(gen, mu, gamma, sigma2, h, y)


@njit(cache=True)
def _exact_chain(gen, mu, gamma, sigma2, h, y0, out):
    y = y0
    out[0] = y0
    for i in range(1, out.shape[0]):
        y = _exact_one(gen, mu, gamma, sigma2, h, y)
        out[i] = y


def sample_exact_transition(params: CirParams, y: float, h: float, rng: np.random.Generator,
                            size: int | None = None):
    """Exact draw(s) of ``Y_{s+h}`` given ``Y_s = y`` (Poisson-mixed gamma)."""
    if h <= 0:
        raise InvalidInput("h must be positive")
    out = np.empty(1 if size is None else int(size))
    _exact_draws(rng, params.mu, params.gamma, params.sigma2, float(h), float(y), out)
    return float(out[0]) if size is None else out


def exact_chain(params: CirParams, y0: float, h: float, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Markov chain of exact transitions on the grid ``0, h, ..., steps * h``."""
    out = np.empty(steps + 1)
    _exact_chain(rng, params.mu, params.gamma, params.sigma2, float(h), float(y0), out)
    return out


# ---------------------------------------------------------------------------
# local-to-unity limit functional


@njit(cache=True)
def _ltu_functionals(gen, mu, gamma, sigma, steps):
    """Left-point sums of ``int Y^2, int Y, int Y^{3/2} dB, int Y^{1/2} dB`` on [0, 1]."""
    h = 1.0 / steps
    sh = math.sqrt(h)
    y = 0.0
    a = 0.0
    bv = 0.0
    i1 = 0.0
    i2 = 0.0
    for _ in range(steps):
        yp = y if y > 0.0 else 0.0
        sq = math.sqrt(yp)
        db = sh * gen.standard_normal()
        a += yp * yp * h
        bv += yp * h
        i1 += yp * sq * db
        i2 += sq * db
        y = y + (mu + gamma * yp) * h + sigma * sq * db
    return a, bv, sigma * i1, sigma * i2


def ltu_functional(a: float, bv: float, i1: float, i2: float) -> tuple[float, float] | None:
    """Solve the 2x2 limit system; ``None`` when the Gram determinant vanishes."""
    det = a - bv * bv
    if not det > SINGULAR_RTOL * max(a, 1e-300):
        return None
    return (i1 - bv * i2) / det, (a * i2 - bv * i1) / det


def _ltu_chunk(args):
    mu, gamma, sigma, steps, seed, lo, hi = args
    out = np.empty((hi - lo, 2))
    resampled = 0
    for p in range(lo, hi):
        attempt = 0
        while True:
            gen = stream(seed, "ltu", p, attempt)
            res = ltu_functional(*_ltu_functionals(gen, mu, gamma, sigma, steps))
            if res is not None:
                break
            attempt += 1
            resampled += 1
            if attempt > 100:
                raise RuntimeError("limit path repeatedly singular")
        out[p - lo] = res
    return out, resampled


def tabulate_ltu_limit(params: CirParams, M: int, steps: int, seed: int = 0, workers: int = 1) -> LimitTable:
    """Monte Carlo draws of the local-to-unity limit of
    ``(n (alpha_hat - alpha_n), mu_hat - mu_n)``.

    Path ``p`` uses stream ``(seed, "ltu", p, attempt)``; a path whose Gram
    determinant ``int Y^2 - (int Y)^2`` is numerically zero is redrawn with
    the next ``attempt`` and counted in ``meta["resample_count"]``.
    """
    if M < 1 or steps < 1:
        raise InvalidInput("M and steps must be positive")
    args = (params.mu, params.gamma, params.sigma, int(steps), int(seed))
    parts = run_chunks(_ltu_chunk, M, args, workers=workers)
    samples = np.concatenate([p[0] for p in parts])
    resampled = sum(p[1] for p in parts)
    meta = {
        "resample_count": resampled,
        "steps": steps,
        "seed": seed,
        "params": {"mu": params.mu, "gamma": params.gamma, "sigma2": params.sigma2},
        "scheme": "full-truncation Euler, left-point Ito sums, shared increments",
    }
    return LimitTable(samples, ("n_alpha_dev", "mu_dev"), meta)


def sample_explosive_limit(params: CirParams, M: int, seed: int = 0) -> LimitTable:
    """Draws of ``(2 / sqrt 3) sigma Z^{-1/2} N`` for the mildly explosive case.

    The ``Z`` draws are kept in the second column so their gamma law can be
    checked directly.
    """
    if params.gamma != 1:
        raise InvalidInput("explosive limit requires gamma = +1")
    rng = stream(seed, "explosive_limit")
    z = rng.gamma(2.0 * params.mu / params.sigma2, params.sigma2 / 2.0, size=M)
    y = rng.standard_normal(M)
    draws = 2.0 / math.sqrt(3.0) * params.sigma * y / np.sqrt(z)
    meta = {"params": {"mu": params.mu, "gamma": params.gamma, "sigma2": params.sigma2}, "seed": seed}
    return LimitTable(np.column_stack([draws, z]), ("limit", "Z"), meta)


def explosive_limit_variance(mu: float, sigma2: float) -> float:
    """``(4/3) sigma^2 E[1/Z]``, finite when ``2 mu > sigma2``."""
    if not 2 * mu > sigma2:
        return math.inf
    return 4.0 / 3.0 * sigma2 / (mu - sigma2 / 2.0)
