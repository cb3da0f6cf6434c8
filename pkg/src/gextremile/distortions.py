"""Distortion functions D on [0, 1], their densities and duals, plus the
distributions of the underlying variable X.

A :class:`DistortionSpec` is an absolutely continuous CDF on [0, 1]. The
distorted variable ``X_D`` has CDF ``D(F_X(x))`` and quantile function
``F_X^-1(D^-1(p))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import betainc, betaincinv, betaln, ndtr, ndtri

from ._numerics import bisect_increasing, integrate_unit_tails
from .errors import DivergenceError, DomainError, ParseError

__all__ = (
    "DISTORTION_KINDS",
    "DistortionSpec",
    "DistributionSpec",
    "eval_cdf",
    "eval_density",
    "dual",
    "distorted_quantile",
    "distortion_risk_mean",
    "survival_form_mean",
    "sample_distorted",
    "parse_distortion",
    "parse_distribution",
    "extremile_exponent",
)

_LOG_HALF = math.log(0.5)


def extremile_exponent(tau: float) -> float:
    """Exponent ``log(1/2) / log(tau)`` of the extremile distortion."""
    return _LOG_HALF / math.log(tau)


# ---------------------------------------------------------------------------
# distribution of X


@dataclass(frozen=True)
class DistributionSpec:
    """Distribution of the variable of interest.

    ``kind`` is one of ``normal`` (mean, sd), ``expo`` (rate), ``uniform``
    (low, high) or ``empirical`` (the support points, with equal mass).
    """

    kind: str
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        kind, p = self.kind, self.params
        if kind == "normal":
            if len(p) != 2 or not p[1] > 0:
                raise DomainError("normal needs (mean, sd) with sd > 0")
        elif kind == "expo":
            if len(p) != 1 or not p[0] > 0:
                raise DomainError("expo needs a rate > 0")
        elif kind == "uniform":
            if len(p) != 2 or not p[0] < p[1]:
                raise DomainError("uniform needs low < high")
        elif kind == "empirical":
            if len(p) == 0:
                raise DomainError("empirical distribution needs at least one point")
            if any(b < a for a, b in zip(p, p[1:])):
                object.__setattr__(self, "params", tuple(sorted(p)))
        else:
            raise DomainError(f"unknown distribution kind {kind!r}")

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0) -> DistributionSpec:
        return cls("normal", (float(mean), float(sd)))

    @classmethod
    def exponential(cls, rate: float = 1.0) -> DistributionSpec:
        return cls("expo", (float(rate),))

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> DistributionSpec:
        return cls("uniform", (float(low), float(high)))

    @classmethod
    def empirical(cls, values) -> DistributionSpec:
        return cls("empirical", tuple(sorted(float(v) for v in values)))

    @classmethod
    def point_mass(cls, value: float) -> DistributionSpec:
        return cls("empirical", (float(value),))

    @property
    def is_continuous(self) -> bool:
        return self.kind != "empirical"

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "normal":
            return (-math.inf, math.inf)
        if self.kind == "expo":
            return (0.0, math.inf)
        return (self.params[0], self.params[-1])

    @property
    def token(self) -> str:
        if self.kind == "empirical":
            raise DomainError("empirical distributions have no text token")
        return ":".join([self.kind, *(repr(v) for v in self.params)])

    def affine(self, scale: float, shift: float) -> DistributionSpec:
        """Distribution of ``scale * X + shift`` for ``scale > 0``."""
        if not scale > 0:
            raise DomainError("scale must be positive")
        p = self.params
        if self.kind == "normal":
            return DistributionSpec.normal(scale * p[0] + shift, scale * p[1])
        if self.kind == "uniform":
            return DistributionSpec.uniform(scale * p[0] + shift, scale * p[1] + shift)
        if self.kind == "empirical":
            return DistributionSpec.empirical([scale * v + shift for v in p])
        raise DomainError("exponential family is not closed under shifts")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "normal":
            return ndtr((x - p[0]) / p[1])
        if self.kind == "expo":
            return np.where(x > 0, -np.expm1(-p[0] * np.maximum(x, 0.0)), 0.0)
        if self.kind == "uniform":
            return np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        pts = np.asarray(p)
        return np.searchsorted(pts, x, side="right") / len(pts)

    def sf(self, x):
        """Survival function ``1 - F(x)`` without cancellation in the upper tail."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "normal":
            return ndtr(-(x - p[0]) / p[1])
        if self.kind == "expo":
            return np.where(x > 0, np.exp(-p[0] * np.maximum(x, 0.0)), 1.0)
        if self.kind == "uniform":
            return np.clip((p[1] - x) / (p[1] - p[0]), 0.0, 1.0)
        return 1.0 - self.cdf(x)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "normal":
            z = (x - p[0]) / p[1]
            return np.exp(-0.5 * z * z) / (p[1] * math.sqrt(2 * math.pi))
        if self.kind == "expo":
            return np.where(x >= 0, p[0] * np.exp(-p[0] * np.maximum(x, 0.0)), 0.0)
        if self.kind == "uniform":
            inside = (x >= p[0]) & (x <= p[1])
            return np.where(inside, 1.0 / (p[1] - p[0]), 0.0)
        raise DomainError("empirical distributions have no density")

    def quantile(self, q):
        """Generalised inverse ``inf{x : F(x) >= q}``."""
        q = np.asarray(q, dtype=float)
        p = self.params
        if self.kind == "normal":
            return p[0] + p[1] * ndtri(q)
        if self.kind == "expo":
            return -np.log1p(-q) / p[0]
        if self.kind == "uniform":
            return p[0] + (p[1] - p[0]) * q
        pts = np.asarray(p)
        k = np.clip(np.ceil(q * len(pts)).astype(int), 1, len(pts))
        return pts[k - 1]

    def upper_quantile(self, s):
        """``F^-1(1 - s)``, accurate for tiny ``s``."""
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.kind == "normal":
            return p[0] - p[1] * ndtri(s)
        if self.kind == "expo":
            return -np.log(s) / p[0]
        if self.kind == "uniform":
            return p[1] - (p[1] - p[0]) * s
        return self.quantile(1.0 - s)

    def quantile_pair(self, u, v):
        """``F^-1(u)`` given both ``u`` and its complement ``v = 1 - u``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.where(u <= 0.5, self.quantile(np.minimum(u, 0.5)), self.upper_quantile(np.minimum(v, 0.5)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` values by inverse-transform sampling."""
        return self.quantile(rng.random(n))


# ---------------------------------------------------------------------------
# distortions

DISTORTION_KINDS = (
    "uniform",
    "extremile",
    "beta",
    "kumaraswamy",
    "es",
    "wang",
    "ph",
    "minvar",
    "maxvar",
    "minmaxvar",
    "maxminvar",
    "user",
)

_N_PARAMS = {
    "uniform": 0,
    "extremile": 1,
    "beta": 2,
    "kumaraswamy": 2,
    "es": 1,
    "wang": 1,
    "ph": 1,
    "minvar": 1,
    "maxvar": 1,
    "minmaxvar": 1,
    "maxminvar": 1,
}


def _fmt(value: float) -> str:
    return str(int(value)) if value.is_integer() else repr(value)


def _check_params(kind: str, params: tuple[float, ...]) -> None:
    if kind not in DISTORTION_KINDS:
        raise DomainError(f"unknown distortion kind {kind!r}")
    if kind == "user":
        _check_user_knots(params)
        return
    if len(params) != _N_PARAMS[kind]:
        raise DomainError(f"{kind} takes {_N_PARAMS[kind]} parameter(s), got {len(params)}")
    if any(not math.isfinite(v) for v in params):
        raise DomainError(f"{kind}: parameters must be finite")
    if kind == "extremile" and not 0 < params[0] < 1:
        raise DomainError(f"extremile: tau={params[0]} must lie in (0, 1)")
    if kind in ("beta", "kumaraswamy"):
        if not (params[0] > 0 and params[1] > 0):
            raise DomainError(f"{kind}: shape parameters a={params[0]}, b={params[1]} must be > 0")
    if kind == "es" and not 0 <= params[0] < 1:
        raise DomainError(f"es: tau={params[0]} must lie in [0, 1)")
    if kind == "ph" and not params[0] >= 1:
        raise DomainError(f"ph: tau={params[0]} must be >= 1")
    if kind in ("minvar", "maxvar", "minmaxvar", "maxminvar") and not params[0] >= 0:
        raise DomainError(f"{kind}: tau={params[0]} must be >= 0")


def _check_user_knots(params: tuple[float, ...]) -> None:
    if len(params) < 4 or len(params) % 2:
        raise DomainError("user density needs at least two (u, d) knots")
    u = params[0::2]
    d = params[1::2]
    if u[0] != 0.0 or u[-1] != 1.0:
        raise DomainError("user density knots must start at u=0 and end at u=1")
    if any(b <= a for a, b in zip(u, u[1:])):
        raise DomainError("user density knots must be strictly increasing in u")
    if any(v < 0 or not math.isfinite(v) for v in d):
        raise DomainError("user density values must be finite and nonnegative")
    if sum((u[i + 1] - u[i]) * (d[i] + d[i + 1]) for i in range(len(u) - 1)) <= 0:
        raise DomainError("user density integrates to zero")


@dataclass(frozen=True)
class DistortionSpec:
    """A distortion CDF ``D`` on [0, 1].

    ``params`` holds the kind's parameters; for ``user`` it is the flattened
    knot table ``(u0, d0, u1, d1, ...)``. ``dualized`` marks the dual
    ``1 - D(1 - u)`` of the base kind.
    """

    kind: str
    params: tuple[float, ...] = ()
    dualized: bool = False
    _user: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        _check_params(self.kind, self.params)
        if self.kind == "user":
            object.__setattr__(self, "_user", _user_tables(self.params))

    # convenience constructors -------------------------------------------
    @classmethod
    def uniform(cls) -> DistortionSpec:
        return cls("uniform")

    @classmethod
    def extremile(cls, tau: float) -> DistortionSpec:
        return cls("extremile", (tau,))

    @classmethod
    def expected_shortfall(cls, tau: float) -> DistortionSpec:
        return cls("es", (tau,))

    @classmethod
    def beta(cls, a: float, b: float) -> DistortionSpec:
        return cls("beta", (a, b))

    @classmethod
    def user_density(cls, knots_u, knots_d) -> DistortionSpec:
        flat: list[float] = []
        for u, d in zip(knots_u, knots_d):
            flat.extend((float(u), float(d)))
        return cls("user", tuple(flat))

    @property
    def tau(self) -> float | None:
        if self.kind in ("uniform", "user", "beta", "kumaraswamy"):
            return None
        return self.params[0]

    @property
    def token(self) -> str:
        base = ":".join([self.kind, *(_fmt(v) for v in self.params)])
        return f"dual:{base}" if self.dualized else base

    def dual(self) -> DistortionSpec:
        return DistortionSpec(self.kind, self.params, not self.dualized)

    def breaks(self) -> tuple[float, ...]:
        """Points of (0, 1) where the density is discontinuous."""
        if self.kind == "es":
            pts: tuple[float, ...] = (self.params[0],)
        elif self.kind == "user":
            pts = tuple(self.params[0::2][1:-1])
        else:
            pts = ()
        pts = tuple(p for p in pts if 0.0 < p < 1.0)
        return tuple(1.0 - p for p in pts) if self.dualized else pts

    # evaluation ----------------------------------------------------------
    def cdf(self, u):
        """``D(u)`` for ``u`` in [0, 1] (no argument checks)."""
        u = np.asarray(u, dtype=float)
        if self.dualized:
            return self._base_g(u)
        return self._base_cdf(u)

    def g(self, v):
        """The distortion function ``g(v) = 1 - D(1 - v)``, accurate for small ``v``."""
        v = np.asarray(v, dtype=float)
        if self.dualized:
            return self._base_cdf(v)
        return self._base_g(v)

    def density(self, u, v=None):
        """``d(u)`` for ``u`` in (0, 1) (no argument checks).

        ``v`` may carry ``1 - u`` computed without cancellation, which keeps
        densities that blow up at 1 accurate in the extreme tail.
        """
        u = np.asarray(u, dtype=float)
        v = 1.0 - u if v is None else np.asarray(v, dtype=float)
        if self.dualized:
            return self._base_density(v, u)
        return self._base_density(u, v)

    def inverse(self, p):
        """``D^-1(p)``, closed form where available, else monotone bisection."""
        p = np.asarray(p, dtype=float)
        if self.dualized:
            return 1.0 - self._base_inverse(1.0 - p)
        return self._base_inverse(p)

    def _base_cdf(self, u: np.ndarray) -> np.ndarray:
        kind, p = self.kind, self.params
        if kind == "uniform":
            return u.copy()
        if kind == "extremile":
            tau = p[0]
            if tau >= 0.5:
                return np.power(u, extremile_exponent(tau))
            return 1.0 - np.power(1.0 - u, extremile_exponent(1.0 - tau))
        if kind == "beta":
            return betainc(p[0], p[1], u)
        if kind == "kumaraswamy":
            a, b = p
            return 1.0 - np.power(1.0 - np.power(u, a), b)
        if kind == "es":
            tau = p[0]
            return np.where(u >= tau, (u - tau) / (1.0 - tau), 0.0)
        if kind == "wang":
            with np.errstate(divide="ignore"):
                return ndtr(ndtri(u) - p[0])
        if kind == "ph":
            return 1.0 - np.power(1.0 - u, 1.0 / p[0])
        if kind == "minvar":
            return np.power(u, p[0] + 1.0)
        if kind == "maxvar":
            return 1.0 - np.power(1.0 - u, 1.0 / (p[0] + 1.0))
        if kind == "minmaxvar":
            k = p[0] + 1.0
            return np.power(1.0 - np.power(1.0 - u, 1.0 / k), k)
        if kind == "maxminvar":
            k = p[0] + 1.0
            return 1.0 - np.power(1.0 - np.power(u, k), 1.0 / k)
        return _user_cdf(self._user, u)

    def _base_g(self, v: np.ndarray) -> np.ndarray:
        kind, p = self.kind, self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            log1m_v = np.log1p(-v)
            if kind == "uniform":
                return v.copy()
            if kind == "extremile":
                tau = p[0]
                if tau >= 0.5:
                    return -np.expm1(extremile_exponent(tau) * log1m_v)
                return np.power(v, extremile_exponent(1.0 - tau))
            if kind == "beta":
                return betainc(p[1], p[0], v)
            if kind == "kumaraswamy":
                a, b = p
                return np.power(-np.expm1(a * log1m_v), b)
            if kind == "es":
                return np.minimum(v / (1.0 - p[0]), 1.0)
            if kind == "wang":
                return ndtr(ndtri(v) + p[0])
            if kind == "ph":
                return np.power(v, 1.0 / p[0])
            if kind == "minvar":
                return -np.expm1((p[0] + 1.0) * log1m_v)
            if kind == "maxvar":
                return np.power(v, 1.0 / (p[0] + 1.0))
            if kind == "minmaxvar":
                k = p[0] + 1.0
                return -np.expm1(k * np.log1p(-np.power(v, 1.0 / k)))
            if kind == "maxminvar":
                k = p[0] + 1.0
                return np.power(-np.expm1(k * log1m_v), 1.0 / k)
            return 1.0 - _user_cdf(self._user, 1.0 - v)

    def _base_density(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        kind, p = self.kind, self.params
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            log_u = np.where(u < 0.5, np.log(u), np.log1p(-v))
            log_v = np.where(v < 0.5, np.log(v), np.log1p(-u))
            if kind == "uniform":
                return np.ones_like(u)
            if kind == "extremile":
                tau = p[0]
                if tau >= 0.5:
                    r = extremile_exponent(tau)
                    return r * np.exp((r - 1.0) * log_u)
                s = extremile_exponent(1.0 - tau)
                return s * np.exp((s - 1.0) * log_v)
            if kind == "beta":
                a, b = p
                return np.exp((a - 1.0) * log_u + (b - 1.0) * log_v - betaln(a, b))
            if kind == "kumaraswamy":
                a, b = p
                one_minus_ua = -np.expm1(a * log_u)
                return a * b * np.exp((a - 1.0) * log_u) * np.power(one_minus_ua, b - 1.0)
            if kind == "es":
                tau = p[0]
                return np.where(u > tau, 1.0 / (1.0 - tau), 0.0)
            if kind == "wang":
                z = np.where(u < 0.5, ndtri(u), -ndtri(v))
                return np.exp(p[0] * z - 0.5 * p[0] * p[0])
            if kind == "ph":
                return np.exp((1.0 / p[0] - 1.0) * log_v) / p[0]
            if kind == "minvar":
                return (p[0] + 1.0) * np.exp(p[0] * log_u)
            if kind == "maxvar":
                k = p[0] + 1.0
                return np.exp((1.0 / k - 1.0) * log_v) / k
            if kind == "minmaxvar":
                tau = p[0]
                k = tau + 1.0
                return np.power(-np.expm1(log_v / k), tau) * np.exp(-tau / k * log_v)
            if kind == "maxminvar":
                tau = p[0]
                k = tau + 1.0
                return np.power(-np.expm1(k * log_u), -tau / k) * np.exp(tau * log_u)
            return _user_density(self._user, u)

    def _base_inverse(self, q: np.ndarray) -> np.ndarray:
        kind, p = self.kind, self.params
        if kind == "uniform":
            return q.copy()
        if kind == "extremile":
            tau = p[0]
            if tau >= 0.5:
                return np.power(q, 1.0 / extremile_exponent(tau))
            return 1.0 - np.power(1.0 - q, 1.0 / extremile_exponent(1.0 - tau))
        if kind == "beta":
            return betaincinv(p[0], p[1], q)
        if kind == "kumaraswamy":
            a, b = p
            return np.power(1.0 - np.power(1.0 - q, 1.0 / b), 1.0 / a)
        if kind == "es":
            return p[0] + q * (1.0 - p[0])
        if kind == "wang":
            with np.errstate(divide="ignore"):
                return ndtr(ndtri(q) + p[0])
        if kind == "ph":
            return 1.0 - np.power(1.0 - q, p[0])
        if kind == "minvar":
            return np.power(q, 1.0 / (p[0] + 1.0))
        if kind == "maxvar":
            return 1.0 - np.power(1.0 - q, p[0] + 1.0)
        if kind == "minmaxvar":
            k = p[0] + 1.0
            return 1.0 - np.power(1.0 - np.power(q, 1.0 / k), k)
        if kind == "maxminvar":
            k = p[0] + 1.0
            return np.power(1.0 - np.power(1.0 - q, k), 1.0 / k)
        return bisect_increasing(self._base_cdf, q, np.zeros_like(q), np.ones_like(q))


def _user_tables(params: tuple[float, ...]):
    u = np.asarray(params[0::2])
    d = np.asarray(params[1::2])
    h = np.diff(u)
    area = float(np.sum(0.5 * h * (d[:-1] + d[1:])))
    d = d / area
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (d[:-1] + d[1:]))])
    cum[-1] = 1.0
    return u, d, cum


def _user_segment(tables, x: np.ndarray):
    u, d, _ = tables
    i = np.clip(np.searchsorted(u, x, side="right") - 1, 0, len(u) - 2)
    return i, x - u[i], u[i + 1] - u[i]


def _user_density(tables, x: np.ndarray) -> np.ndarray:
    _, d, _ = tables
    i, s, h = _user_segment(tables, x)
    return d[i] + (d[i + 1] - d[i]) * s / h


def _user_cdf(tables, x: np.ndarray) -> np.ndarray:
    _, d, cum = tables
    x = np.clip(x, 0.0, 1.0)
    i, s, h = _user_segment(tables, x)
    val = cum[i] + d[i] * s + (d[i + 1] - d[i]) * s * s / (2.0 * h)
    return np.clip(val, 0.0, 1.0)


# ---------------------------------------------------------------------------
# public operations


def _as_output(x):
    return float(x) if np.ndim(x) == 0 else x


def eval_cdf(spec: DistortionSpec, u):
    """``D(u)`` with a domain check on ``u`` in [0, 1]."""
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise DomainError("u must lie in [0, 1]")
    out = spec.cdf(arr)
    # endpoints are exact by definition
    out = np.where(arr == 0.0, 0.0, np.where(arr == 1.0, 1.0, out))
    return _as_output(out)


def eval_density(spec: DistortionSpec, u):
    """``d(u)`` with a domain check on ``u`` strictly inside (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any((arr <= 0) | (arr >= 1)) or np.any(np.isnan(arr)):
        raise DomainError("the density is only evaluated strictly inside (0, 1)")
    return _as_output(spec.density(arr))


def dual(spec: DistortionSpec) -> DistortionSpec:
    """The dual distortion ``t -> 1 - D(1 - t)``."""
    return spec.dual()


def distorted_quantile(spec: DistortionSpec, dist: DistributionSpec, p):
    """The ``p``-quantile of ``X_D``, i.e. ``F_X^-1(D^-1(p))``."""
    arr = np.asarray(p, dtype=float)
    if np.any((arr <= 0) | (arr >= 1)):
        raise DomainError("p must lie in (0, 1)")
    return _as_output(dist.quantile(spec.inverse(arr)))


def _empirical_masses(spec: DistortionSpec, m: int) -> np.ndarray:
    grid = np.arange(m + 1) / m
    return np.diff(eval_cdf(spec, grid))


def _quantile_form(spec: DistortionSpec, dist: DistributionSpec) -> tuple[float, bool]:
    def integrand(u, v):
        values = dist.quantile_pair(u, v) * spec.density(u, v)
        return np.where(np.isfinite(values), values, np.nan)

    return integrate_unit_tails(integrand, spec.breaks())


def survival_form_mean(spec: DistortionSpec, dist: DistributionSpec) -> float:
    """``E[X_D]`` written as ``-int_{-inf}^0 D(F(y)) dy + int_0^inf (1 - D(F(y))) dy``."""
    if dist.kind == "empirical":
        pts = np.asarray(dist.params)
        cuts = np.unique(np.concatenate([pts, [0.0]]))
        level = spec.cdf(dist.cdf(cuts[:-1]))
        width = np.diff(cuts)
        mids = cuts[:-1]
        neg = np.sum(np.where(mids < 0, level * width, 0.0))
        pos = np.sum(np.where(mids >= 0, (1.0 - level) * width, 0.0))
        # below min(x) the level is 0 and above max(x) it is 1, so neither tail contributes
        return float(pos - neg)

    def lower(y: float) -> float:
        return float(spec.cdf(dist.cdf(y)))

    def upper(y: float) -> float:
        return float(spec.g(dist.sf(y)))

    lo, hi = dist.support
    pts = {0.0}
    for q in (1e-9, 1e-6, 1e-3, 0.5, *(spec.inverse(b) for b in spec.breaks())):
        pts.add(float(dist.quantile(float(q))))
    for s in (1e-3, 1e-6, 1e-9):
        pts.add(float(dist.upper_quantile(s)))
    if math.isfinite(lo):
        pts.add(lo)
    if math.isfinite(hi):
        pts.add(hi)
    cuts = sorted(p for p in pts if math.isfinite(p))
    edges = [cuts[0] if math.isfinite(lo) else -math.inf, *cuts, cuts[-1] if math.isfinite(hi) else math.inf]
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges, edges[1:]):
            if not b > a:
                continue
            if b <= 0:
                total -= integrate.quad(lower, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
            else:
                total += integrate.quad(upper, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
    return total


def distortion_risk_mean(spec: DistortionSpec, dist: DistributionSpec) -> float:
    """``E[X_D] = int_0^1 F^-1(u) d(u) du``, the square-loss generalized extremile.

    The quantile form is integrated on (clip, 1 - clip) for clips shrinking
    geometrically from 1e-8, with the remaining tail extrapolated. If the
    tail increments do not shrink, or the extrapolated remainder exceeds 1e-4
    of the value, the integral is declared divergent. The result is
    cross-checked against the survival form to 1e-6.
    """
    if dist.kind == "empirical":
        pts = np.asarray(dist.params)
        value = float(np.dot(_empirical_masses(spec, len(pts)), pts))
    else:
        value, settled = _quantile_form(spec, dist)
        if not settled:
            raise DivergenceError(
                f"E[X_D] for {spec.token} under {dist.token} does not settle as the endpoint clip shrinks"
            )
    check = survival_form_mean(spec, dist)
    if abs(check - value) > 1e-6 * max(1.0, abs(value)):
        raise DivergenceError(f"quantile and survival forms disagree: {value!r} vs {check!r}")
    return value


def sample_distorted(spec: DistortionSpec, dist: DistributionSpec, n: int, seed: int):
    """``n`` draws of ``X_D`` by inverse transform, deterministic in ``seed``."""
    from .empirical import Sample

    if n < 1:
        raise DomainError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return Sample.from_values(dist.quantile(spec.inverse(u)))


# ---------------------------------------------------------------------------
# text tokens

_ALIASES = {
    "extremile": "extremile",
    "k": "extremile",
    "es": "es",
    "expected-shortfall": "es",
    "beta": "beta",
    "kumaraswamy": "kumaraswamy",
    "wang": "wang",
    "ph": "ph",
    "proportional-hazard": "ph",
    "minvar": "minvar",
    "maxvar": "maxvar",
    "minmaxvar": "minmaxvar",
    "maxminvar": "maxminvar",
    "uniform": "uniform",
    "user": "user",
}


def _floats(parts: list[str], token: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ParseError(f"bad number in token {token!r}") from exc


def parse_distortion(token: str) -> DistortionSpec:
    """Parse tokens such as ``uniform``, ``extremile:0.9``, ``beta:2:5`` or ``dual:es:0.9``.

    ``user:u0=d0,u1=d1,...`` gives a piecewise-linear density on the knots.
    """
    text = token.strip().lower()
    if text.startswith("dual:"):
        return parse_distortion(text[5:]).dual()
    head, _, rest = text.partition(":")
    kind = _ALIASES.get(head)
    if kind is None:
        raise ParseError(f"unknown distortion {head!r} in {token!r}")
    if kind == "user":
        try:
            pairs = [item.split("=") for item in rest.split(",") if item]
            flat = tuple(float(v) for pair in pairs for v in pair)
        except ValueError as exc:
            raise ParseError(f"bad knot table in {token!r}") from exc
        if any(len(pair) != 2 for pair in pairs):
            raise ParseError(f"knots must be written u=d in {token!r}")
        return DistortionSpec("user", flat)
    params = _floats(rest.split(":"), token) if rest else ()
    try:
        return DistortionSpec(kind, params)
    except DomainError as exc:
        raise ParseError(str(exc)) from exc


def parse_distribution(token: str) -> DistributionSpec:
    """Parse ``normal:mu:sd``, ``expo:rate``, ``uniform:a:b`` or ``point:c``."""
    text = token.strip().lower()
    head, _, rest = text.partition(":")
    params = _floats(rest.split(":"), token) if rest else ()
    try:
        if head in ("normal", "norm", "gauss"):
            return DistributionSpec.normal(*params) if params else DistributionSpec.normal()
        if head in ("expo", "exp", "exponential"):
            return DistributionSpec.exponential(*params) if params else DistributionSpec.exponential()
        if head == "uniform":
            return DistributionSpec.uniform(*params) if params else DistributionSpec.uniform()
        if head == "point":
            return DistributionSpec.point_mass(*params)
    except (TypeError, DomainError) as exc:
        raise ParseError(f"bad distribution token {token!r}: {exc}") from exc
    raise ParseError(f"unknown distribution {head!r} in {token!r}")

