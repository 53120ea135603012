"""Affine autoregressive families and their exact simulation.

Each family has a conditional mean ``alpha_n * x + mu_n`` and conditional
variance ``beta_n * x + delta_n``. The autoregressive coefficient ``alpha_n``
comes from a :class:`RegimeSpec` (local-to-unity or mildly integrated); the
remaining coefficients are held at their family limits.

Simulation draws from the exact conditional law of each family:

* INARCH: ``Poisson(alpha_n x + mu)``
* ARG: ``Z ~ Poisson(alpha_n x / c)`` then ``Gamma(kappa + Z, scale=c)``
* NBAR: the count side of the same chain with ``c = 1``
* ARG0: ``Z ~ Poisson(alpha_n x / theta + b)`` then ``Gamma(Z, scale=theta)``,
  exactly zero when ``Z = 0``
* LinearAR1: ``alpha_n x + mu + N(0, sigma_eps^2)``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numba import njit

from .errors import ConfigError, InvalidInput, NotStationary, RegimeInfeasible
from .rng import stream as make_stream

# Above this mean the Poisson draw is taken from its normal limit; numpy's
# sampler overflows near 9.2e18 and the skewness here is below 1e-6.
POISSON_NORMAL_SWITCH = 1e12


class Family(str, enum.Enum):
    INARCH = "INARCH"
    NBAR = "NBAR"
    ARG = "ARG"
    ARG0 = "ARG0"
    LINEAR_AR1 = "LinearAR1"


_FAMILY_CODE = {
    Family.INARCH: 0,
    Family.NBAR: 1,
    Family.ARG: 2,
    Family.ARG0: 3,
    Family.LINEAR_AR1: 4,
}

COUNT_FAMILIES = (Family.INARCH, Family.NBAR)


@dataclass(frozen=True)
class AffineSpec:
    """One member of the affine family.

    Only the parameters relevant to ``family`` are read: ``mu`` (INARCH,
    LinearAR1), ``kappa`` (NBAR, ARG), ``c`` (ARG), ``theta`` and ``b``
    (ARG0), ``sigma_eps`` (LinearAR1).
    """

    family: Family
    mu: float | None = None
    kappa: float | None = None
    c: float | None = None
    theta: float | None = None
    b: float | None = None
    sigma_eps: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        fam = self.family

        def need(name, allow_zero=False):
            v = getattr(self, name)
            if v is None:
                raise InvalidInput(f"{fam.value} requires parameter {name!r}")
            v = float(v)
            if not math.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
                raise InvalidInput(f"{fam.value} parameter {name}={v} must be positive")
            object.__setattr__(self, name, v)

        if fam is Family.INARCH:
            need("mu")
        elif fam is Family.NBAR:
            need("kappa")
        elif fam is Family.ARG:
            need("c")
            need("kappa")
        elif fam is Family.ARG0:
            need("theta")
            need("b", allow_zero=True)
        else:
            need("mu")
            # sigma_eps = 0 gives the deterministic recursion
            need("sigma_eps", allow_zero=True)

    @property
    def is_count(self) -> bool:
        return self.family in COUNT_FAMILIES

    @property
    def sigma2(self) -> float:
        """Limit of ``beta_n`` as ``alpha_n -> 1``."""
        fam = self.family
        if fam is Family.INARCH:
            return 1.0
        if fam is Family.NBAR:
            return 2.0
        if fam is Family.ARG:
            return 2.0 * self.c
        if fam is Family.ARG0:
            return 2.0 * self.theta
        return 0.0

    def coefficients(self, alpha_n: float) -> tuple[float, float, float]:
        """Return ``(mu_n, beta_n, delta_n)`` at autoregressive coefficient ``alpha_n``."""
        a = float(alpha_n)
        fam = self.family
        if fam is Family.INARCH:
            return self.mu, a, self.mu
        if fam is Family.NBAR:
            k = self.kappa
            return a * k, a * (1.0 + a), a * (1.0 + a) * k
        if fam is Family.ARG:
            c, k = self.c, self.kappa
            return c * k, 2.0 * a * c, c * c * k
        if fam is Family.ARG0:
            th, b = self.theta, self.b
            return th * b, 2.0 * th * a, 2.0 * th * th * b
        return self.mu, 0.0, self.sigma_eps ** 2

    def params(self) -> dict[str, float]:
        keys = {
            Family.INARCH: ("mu",),
            Family.NBAR: ("kappa",),
            Family.ARG: ("c", "kappa"),
            Family.ARG0: ("theta", "b"),
            Family.LINEAR_AR1: ("mu", "sigma_eps"),
        }[self.family]
        return {k: getattr(self, k) for k in keys}

    def _kernel_args(self) -> tuple[int, float, float]:
        fam = self.family
        code = _FAMILY_CODE[fam]
        if fam is Family.INARCH:
            return code, self.mu, 0.0
        if fam is Family.NBAR:
            return code, self.kappa, 0.0
        if fam is Family.ARG:
            return code, self.c, self.kappa
        if fam is Family.ARG0:
            return code, self.theta, self.b
        return code, self.mu, self.sigma_eps


class RegimeKind(str, enum.Enum):
    LOCAL_TO_UNITY = "local"
    MILDLY_INTEGRATED = "mild"


@dataclass(frozen=True)
class RegimeSpec:
    """Parameterization of ``alpha_n``.

    ``LocalToUnity``: ``alpha_n = 1 + gamma / n``.
    ``MildlyIntegrated``: ``alpha_n = 1 + sign(gamma) / k_n`` with
    ``k_n = n ** tau`` unless ``kn`` overrides it.
    """

    kind: RegimeKind
    gamma: float = -1.0
    tau: float | None = None
    kn: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RegimeKind(self.kind))
        if self.kind is RegimeKind.MILDLY_INTEGRATED:
            if self.gamma == 0:
                raise InvalidInput("mildly integrated regime needs gamma != 0")
            # only the sign is identified
            object.__setattr__(self, "gamma", math.copysign(1.0, self.gamma))
            if self.kn is None:
                if self.tau is None or not 0.0 < self.tau < 1.0:
                    raise InvalidInput("mildly integrated regime needs tau in (0, 1) or kn")
            elif self.kn <= 0:
                raise InvalidInput("kn must be positive")

    @classmethod
    def local(cls, gamma: float) -> "RegimeSpec":
        return cls(RegimeKind.LOCAL_TO_UNITY, gamma=float(gamma))

    @classmethod
    def mild(cls, gamma: float = -1.0, tau: float | None = None, kn: float | None = None) -> "RegimeSpec":
        return cls(RegimeKind.MILDLY_INTEGRATED, gamma=float(gamma), tau=tau, kn=kn)


def resolve_alpha(regime: RegimeSpec, n: int) -> tuple[float, float | None]:
    """Map a regime and sample size to ``(alpha_n, k_n)``.

    ``k_n`` is ``None`` for the local-to-unity regime.

    Raises
    ------
    RegimeInfeasible
        If ``n < 2`` or, for the mildly integrated regime, ``k_n < 2`` or
        ``k_n >= n``.
    """
    if n < 2:
        raise RegimeInfeasible(f"sample size n={n} is below 2")
    if regime.kind is RegimeKind.LOCAL_TO_UNITY:
        return 1.0 + regime.gamma / n, None
    kn = float(regime.kn) if regime.kn is not None else float(n) ** regime.tau
    if kn < 2.0 or kn >= n:
        raise RegimeInfeasible(f"k_n={kn:.6g} outside [2, n={n})")
    return 1.0 + regime.gamma / kn, kn


def conditional_moments(spec: AffineSpec, alpha_n: float, x: float) -> tuple[float, float]:
    """Conditional mean and variance of ``X_t`` given ``X_{t-1} = x``."""
    if x < 0:
        raise InvalidInput("state must be nonnegative")
    mu_n, beta_n, delta_n = spec.coefficients(alpha_n)
    return alpha_n * x + mu_n, beta_n * x + delta_n


def marginal_mean(spec: AffineSpec, alpha_n: float) -> float:
    """Stationary mean ``mu_n / (1 - alpha_n)``."""
    if alpha_n >= 1.0:
        raise NotStationary(f"alpha_n={alpha_n} >= 1 has no stationary mean")
    mu_n, _, _ = spec.coefficients(alpha_n)
    return mu_n / (1.0 - alpha_n)


# ---------------------------------------------------------------------------
# compiled samplers


@njit(cache=True)
def _poisson(gen, lam):
    """Return ``(draw, draw - lam)``; the centred value is exact on both branches."""
    if lam <= 0.0:
        return 0.0, 0.0
    if lam > POISSON_NORMAL_SWITCH:
        w = math.sqrt(lam) * gen.standard_normal()
        return np.floor(lam + w + 0.5), w
    k = float(gen.poisson(lam))
    return k, k - lam


@njit(cache=True)
def _step(gen, code, alpha, p1, p2, x):
    """One draw; returns ``(x_next, innovation)``."""
    if code == 0:
        return _poisson(gen, alpha * x + p1)
    if code == 1:
        # gamma mixing variable with c = 1, then Poisson(alpha * G)
        g = gen.gamma(p1 + x, 1.0)
        y, _ = _poisson(gen, alpha * g)
        return y, y - alpha * (x + p1)
    if code == 2:
        z, _ = _poisson(gen, alpha * x / p1)
        y = gen.gamma(p2 + z, p1)
        return y, y - (alpha * x + p1 * p2)
    if code == 3:
        z, _ = _poisson(gen, alpha * x / p1 + p2)
        if z == 0.0:
            y = 0.0
        else:
            y = gen.gamma(z, p1)
        return y, y - (alpha * x + p1 * p2)
    w = p2 * gen.standard_normal()
    return alpha * x + p1 + w, w


@njit(cache=True)
def _path(gen, code, alpha, p1, p2, x0, out, innov):
    out[0] = x0
    x = x0
    for t in range(1, out.shape[0]):
        x, w = _step(gen, code, alpha, p1, p2, x)
        out[t] = x
        innov[t - 1] = w


@njit(cache=True)
def _draws(gen, code, alpha, p1, p2, x, out):
    for i in range(out.shape[0]):
        out[i], _ = _step(gen, code, alpha, p1, p2, x)


# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """A nonnegative series ``X_0, ..., X_n``.

    ``innovations`` (length ``n``), when present, are the exact centred draws
    ``X_t - E[X_t | X_{t-1}]`` recorded during simulation.
    """

    values: np.ndarray
    provenance: dict[str, Any] | None = None
    innovations: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def x0(self) -> float:
        return float(self.values[0])


def step(spec: AffineSpec, alpha_n: float, x: float, rng: np.random.Generator, size: int | None = None):
    """Exact draw(s) of ``X_t`` given ``X_{t-1} = x``."""
    if x < 0:
        raise InvalidInput("state must be nonnegative")
    code, p1, p2 = spec._kernel_args()
    out = np.empty(1 if size is None else int(size))
    _draws(rng, code, float(alpha_n), p1, p2, float(x), out)
    return float(out[0]) if size is None else out


def simulate_alpha(spec: AffineSpec, alpha_n: float, n: int, x0: float = 0.0,
                   rng: np.random.Generator | None = None, keep_innovations: bool = False):
    """Simulate ``n`` steps at a fixed ``alpha_n``; returns ``(values, innovations)``."""
    if x0 < 0:
        raise InvalidInput("x0 must be nonnegative")
    if spec.is_count and float(x0) != int(x0):
        raise InvalidInput("count families need an integer x0")
    code, p1, p2 = spec._kernel_args()
    out = np.empty(n + 1)
    innov = np.empty(n)
    _path(rng, code, float(alpha_n), p1, p2, float(x0), out, innov)
    return out, (innov if keep_innovations else None)


def simulate(spec: AffineSpec, regime: RegimeSpec | float, n: int, x0: float = 0.0,
             seed: int = 0, stream: int = 0, keep_innovations: bool = False) -> Trajectory:
    """Simulate a trajectory of length ``n + 1`` from its own random stream.

    ``regime`` may be a :class:`RegimeSpec` or a fixed ``alpha_n``. The output
    depends only on ``(seed, stream)``.
    """
    if n < 0:
        raise InvalidInput("n must be nonnegative")
    if n == 0:
        return Trajectory(np.array([float(x0)]), {"spec": spec, "regime": regime, "seed": seed, "stream": stream})
    if isinstance(regime, RegimeSpec):
        alpha_n, kn = resolve_alpha(regime, n)
    else:
        alpha_n, kn = float(regime), None
    rng = make_stream(seed, "trajectory", stream)
    values, innov = simulate_alpha(spec, alpha_n, n, x0, rng, keep_innovations)
    if spec.is_count and np.all(np.isfinite(values)) and values.max() < 2.0 ** 53:
        values = values.astype(np.int64)
    prov = {"spec": spec, "regime": regime, "alpha_n": alpha_n, "k_n": kn, "seed": seed, "stream": stream}
    return Trajectory(values, prov, innov)


# ---------------------------------------------------------------------------
# plain-text config: one ``key = value`` per line, ``#`` comments

_SPEC_KEYS = ("mu", "kappa", "c", "theta", "b", "sigma_eps")
CONFIG_KEYS = ("family",) + _SPEC_KEYS + ("regime", "gamma", "tau", "kn", "n", "x0", "seed")


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def read_config(path: str | Path) -> dict[str, str]:
    return parse_config(Path(path).read_text())


def spec_from_config(cfg: dict[str, Any]) -> AffineSpec:
    if "family" not in cfg:
        raise ConfigError("config lacks 'family'")
    kw = {k: float(cfg[k]) for k in _SPEC_KEYS if cfg.get(k) not in (None, "")}
    try:
        return AffineSpec(Family(cfg["family"]), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def regime_from_config(cfg: dict[str, Any]) -> RegimeSpec:
    kind = cfg.get("regime", "mild")
    gamma = float(cfg.get("gamma", -1.0))
    tau = float(cfg["tau"]) if cfg.get("tau") not in (None, "") else None
    kn = float(cfg["kn"]) if cfg.get("kn") not in (None, "") else None
    if kind in ("local", "local_to_unity", "LocalToUnity"):
        return RegimeSpec.local(gamma)
    if kind in ("mild", "mildly_integrated", "MildlyIntegrated"):
        return RegimeSpec.mild(gamma, tau=tau, kn=kn)
    raise ConfigError(f"unknown regime {kind!r}")


def config_text(spec: AffineSpec, regime: RegimeSpec, **extra) -> str:
    lines = [f"family = {spec.family.value}"]
    lines += [f"{k} = {v!r}" for k, v in spec.params().items()]
    lines.append(f"regime = {regime.kind.value}")
    lines.append(f"gamma = {regime.gamma!r}")
    if regime.tau is not None:
        lines.append(f"tau = {regime.tau!r}")
    if regime.kn is not None:
        lines.append(f"kn = {regime.kn!r}")
    for k, v in extra.items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
