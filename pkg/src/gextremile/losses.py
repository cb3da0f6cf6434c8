"""Loss functions ``l(x, c)``, their right-hand derivatives in ``c`` and the
monotone decompositions used by the variance formulas.

Derivatives follow one convention throughout: ``deriv(x, c)`` is the
right-hand derivative in ``c``, which makes ``x -> deriv(x, c)``
left-continuous at kinks (for example ``1{x <= c} - 1{x > c}`` for the
absolute loss).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distortions import DistributionSpec, parse_distribution
from .errors import DomainError, ParseError, UnsupportedError

__all__ = (
    "LOSS_KINDS",
    "LossSpec",
    "LossFlags",
    "MonotoneDecomposition",
    "eval_loss",
    "eval_deriv",
    "decompose",
    "classify",
    "parse_loss",
)

LOSS_KINDS = (
    "abs",
    "power",
    "square",
    "quantile",
    "expectile",
    "huber",
    "esscher",
    "g1",
    "g2",
    "g3",
    "g4",
    "cens-quantile",
    "trimmed",
    "moment-ratio",
    "signed-mean-ratio",
)

_N_PARAMS = {
    "abs": 0,
    "power": 1,
    "square": 0,
    "quantile": 1,
    "expectile": 1,
    "huber": 1,
    "esscher": 1,
    "g1": 0,
    "g2": 2,
    "g3": 0,
    "g4": 1,
    "cens-quantile": 1,
    "trimmed": 1,
    "moment-ratio": 0,
    "signed-mean-ratio": 0,
}


@dataclass(frozen=True)
class LossFlags:
    sign_symmetric: bool
    shift_invariant: bool
    homogeneous_degree: float | None
    convex: bool


@dataclass(frozen=True)
class MonotoneDecomposition:
    """``deriv(x, c) = h1(x) - h2(x)`` at a fixed ``c``, both parts nondecreasing.

    ``atoms`` lists the point masses ``(location, weight)`` of the measure
    ``d_x deriv(x, c)`` and ``density`` its absolutely continuous part, which
    may jump or be singular only at ``density_breaks``. Weights carry their
    sign: the absolute loss has an atom of weight -2 at ``c``.
    """

    c: float
    h1: Callable[[np.ndarray], np.ndarray]
    h2: Callable[[np.ndarray], np.ndarray]
    atoms: tuple[tuple[float, float], ...]
    density: Callable[[np.ndarray], np.ndarray] | None
    density_breaks: tuple[float, ...] = ()


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LossSpec:
    """A loss kind with its parameters.

    ``censor`` is the censoring distribution of ``cens-quantile``; ``None``
    stands for no censoring (``F_C = 0``).
    """

    kind: str
    params: tuple[float, ...] = ()
    censor: DistributionSpec | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        kind, p = self.kind, self.params
        if kind not in LOSS_KINDS:
            raise DomainError(f"unknown loss kind {kind!r}")
        if len(p) != _N_PARAMS[kind]:
            raise DomainError(f"{kind} takes {_N_PARAMS[kind]} parameter(s), got {len(p)}")
        if any(not math.isfinite(v) for v in p):
            raise DomainError(f"{kind}: parameters must be finite")
        if kind in ("quantile", "expectile", "cens-quantile") and not 0 < p[0] < 1:
            raise DomainError(f"{kind}: delta={p[0]} must lie in (0, 1)")
        if kind in ("huber", "trimmed", "power") and not p[0] > 0:
            raise DomainError(f"{kind}: parameter {p[0]} must be > 0")
        if kind == "g2" and not p[0] > 0:
            raise DomainError(f"g2: delta={p[0]} must be > 0")
        if self.censor is not None and kind != "cens-quantile":
            raise DomainError("only cens-quantile takes a censoring distribution")

    @property
    def delta(self) -> float | None:
        return self.params[0] if self.params else None

    @property
    def token(self) -> str:
        parts = [self.kind, *(_fmt(v) for v in self.params)]
        if self.censor is not None:
            parts.append(self.censor.token)
        return ":".join(parts)

    @property
    def flags(self) -> LossFlags:
        return classify(self)

    # evaluation ----------------------------------------------------------
    def value(self, x, c):
        x = np.asarray(x, dtype=float)
        c = np.asarray(c, dtype=float)
        kind, p = self.kind, self.params
        r = x - c
        if kind == "abs":
            return np.abs(r)
        if kind == "power":
            return np.power(np.abs(r), p[0])
        if kind == "square":
            return r * r
        if kind == "quantile":
            return np.abs(p[0] - (x <= c)) * np.abs(r)
        if kind == "expectile":
            return np.abs(p[0] - (x <= c)) * r * r
        if kind == "huber":
            a = np.abs(r)
            return np.where(a <= p[0], 0.5 * r * r, p[0] * (a - 0.5 * p[0]))
        if kind == "esscher":
            return r * r * np.exp(p[0] * x)
        if kind == "g1":
            return -c * (x * x - x) + 0.5 * c * c
        if kind == "g2":
            return -c * np.power(np.abs(x - p[1]), p[0]) + 0.5 * c * c
        if kind == "g3":
            return np.where(c < x, x - c, 0.0) + c * x
        if kind == "g4":
            return 0.5 * c * c - (1.0 + p[0]) * c * x
        if kind == "cens-quantile":
            check = np.abs(p[0] - (x <= c)) * np.abs(r)
            return check - (1.0 - p[0]) * self.censor_integral(c)
        if kind == "trimmed":
            return np.where(np.abs(r) < p[0], r * r, p[0] * p[0])
        if kind == "moment-ratio":
            return x * r * r
        # signed-mean-ratio
        return np.where(x >= 0, (1.0 - c) ** 2 * x, -(c * c) * x)

    def deriv(self, x, c):
        """Right-hand derivative of ``value`` in ``c``."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(c, dtype=float)
        kind, p = self.kind, self.params
        r = x - c
        if kind == "abs":
            return np.where(x <= c, 1.0, -1.0)
        if kind == "power":
            q = p[0]
            if q == 1.0:
                return np.where(x <= c, 1.0, -1.0)
            with np.errstate(divide="ignore"):
                mag = q * np.power(np.abs(r), q - 1.0)
            if q < 1.0:
                mag = np.where(r == 0, np.inf, mag)
            return np.where(x <= c, mag, -mag)
        if kind == "square":
            return -2.0 * r
        if kind == "quantile":
            return (x <= c) - p[0]
        if kind == "expectile":
            return -2.0 * p[0] * np.abs(r) - 2.0 * r * (x <= c)
        if kind == "huber":
            return np.where(np.abs(r) <= p[0], -r, -np.sign(r) * p[0])
        if kind == "esscher":
            return -2.0 * r * np.exp(p[0] * x)
        if kind == "g1":
            return -(x * x - x) + c
        if kind == "g2":
            return -np.power(np.abs(x - p[1]), p[0]) + c
        if kind == "g3":
            return x - (x > c)
        if kind == "g4":
            return c - (1.0 + p[0]) * x
        if kind == "cens-quantile":
            return (x <= c) - p[0] - (1.0 - p[0]) * self.censor_cdf(c)
        if kind == "trimmed":
            return np.where((r > -p[0]) & (r <= p[0]), -2.0 * r, 0.0)
        if kind == "moment-ratio":
            return -2.0 * x * r
        return 2.0 * c * np.abs(x) - 2.0 * x * (x >= 0)

    def weighted_slope(self, x: np.ndarray, weights: np.ndarray, c: float, cum_weights: np.ndarray | None = None) -> float:
        """``sum_i weights_i * deriv(x_i, c)`` for sorted ``x``.

        Indicator-type derivatives are summed as ``W(x <= c) - delta * W`` so
        that exact balance points give an exact zero.
        """
        kind = self.kind
        if kind in ("abs", "quantile", "cens-quantile") or (kind == "power" and self.params[0] == 1.0):
            if cum_weights is None:
                cum_weights = np.cumsum(weights)
            k = int(np.searchsorted(x, c, side="right"))
            below = float(cum_weights[k - 1]) if k > 0 else 0.0
            total = float(cum_weights[-1])
            if kind == "quantile":
                return below - self.params[0] * total
            if kind == "cens-quantile":
                delta = self.params[0]
                return below - (delta + (1.0 - delta) * float(self.censor_cdf(c))) * total
            return 2.0 * below - total
        return float(np.dot(weights, self.deriv(x, c)))

    def kinks(self, c: float) -> tuple[float, ...]:
        """Points in ``x`` where ``deriv(., c)`` is not smooth."""
        kind, p = self.kind, self.params
        if kind in ("abs", "quantile", "expectile", "g3", "cens-quantile", "power"):
            return (c,)
        if kind in ("huber", "trimmed"):
            return (c - p[0], c + p[0])
        if kind == "g2":
            return (p[1],)
        if kind == "signed-mean-ratio":
            return (0.0,)
        return ()

    # censoring helpers ----------------------------------------------------
    def censor_cdf(self, c):
        if self.censor is None:
            return np.zeros_like(np.asarray(c, dtype=float))
        return self.censor.cdf(c)

    def censor_integral(self, c):
        """``int_0^c F_C(s) ds``: closed form for exponential censoring."""
        c = np.asarray(c, dtype=float)
        cen = self.censor
        if cen is None:
            return np.zeros_like(c)
        if cen.kind == "expo":
            rate = cen.params[0]
            pos = np.maximum(c, 0.0)
            return pos + np.expm1(-rate * pos) / rate
        nodes, weights = np.polynomial.legendre.leggauss(64)
        flat = np.atleast_1d(c)
        out = np.empty_like(flat)
        for i, ci in enumerate(flat):
            s = 0.5 * ci * (nodes + 1.0)
            out[i] = 0.5 * ci * float(np.dot(weights, cen.cdf(s)))
        return out.reshape(c.shape)


def _fmt(value: float) -> str:
    return str(int(value)) if value.is_integer() else repr(value)


# ---------------------------------------------------------------------------
# public operations


def eval_loss(spec: LossSpec, x, c):
    out = spec.value(x, c)
    return float(out) if np.ndim(out) == 0 else out


def eval_deriv(spec: LossSpec, x, c):
    out = spec.deriv(x, c)
    return float(out) if np.ndim(out) == 0 else out


def classify(spec: LossSpec) -> LossFlags:
    """Sign symmetry, shift invariance, degree of positive homogeneity and convexity."""
    kind, p = spec.kind, spec.params
    table = {
        "abs": (True, True, 1.0, True),
        "square": (True, True, 2.0, True),
        "quantile": (False, True, 1.0, True),
        "expectile": (False, True, 2.0, True),
        "huber": (True, True, None, True),
        "esscher": (False, False, None, True),
        "g1": (False, False, None, True),
        "g2": (False, False, None, True),
        "g3": (False, False, None, True),
        "g4": (True, False, 2.0, True),
        "cens-quantile": (False, False, None, False),
        "trimmed": (True, True, None, False),
        "moment-ratio": (False, False, 3.0, False),
        "signed-mean-ratio": (False, False, None, True),
    }
    if kind == "power":
        return LossFlags(True, True, p[0], p[0] >= 1.0)
    return LossFlags(*table[kind])


def _split_at(deriv: Callable, x_star: float, rising_before: bool, rising_after: bool):
    """h1, h2 for a continuous derivative that is monotone on each side of ``x_star``."""
    ref = float(deriv(x_star))
    if rising_before and rising_after:
        return deriv, _zeros
    if not rising_before and not rising_after:
        return _zeros, lambda x: -deriv(x)
    if rising_before:
        return (
            lambda x: deriv(np.minimum(x, x_star)),
            lambda x: ref - deriv(np.maximum(x, x_star)),
        )
    return (
        lambda x: deriv(np.maximum(x, x_star)) - ref,
        lambda x: -deriv(np.minimum(x, x_star)),
    )


def decompose(spec: LossSpec, c: float) -> MonotoneDecomposition:
    """Monotone decomposition of ``x -> deriv(x, c)`` and its Stieltjes measure."""
    kind, p = spec.kind, spec.params
    if not classify(spec).convex:
        raise UnsupportedError(
            f"{kind} is not convex in c and has no monotone decomposition; use grid search "
            "and Monte Carlo variance instead"
        )

    def deriv(x):
        return spec.deriv(x, c)

    def neg(x):
        return -spec.deriv(x, c)

    if kind == "abs" or (kind == "power" and p[0] == 1.0):
        return MonotoneDecomposition(c, _zeros, neg, ((c, -2.0),), None)
    if kind == "quantile":
        return MonotoneDecomposition(c, _zeros, neg, ((c, -1.0),), None)
    if kind == "square":
        return MonotoneDecomposition(c, _zeros, neg, (), lambda x: np.full_like(np.asarray(x, float), -2.0))
    if kind == "power":
        q = p[0]

        def power_density(x):
            with np.errstate(divide="ignore"):
                return -q * (q - 1.0) * np.power(np.abs(np.asarray(x, float) - c), q - 2.0)

        return MonotoneDecomposition(c, _zeros, neg, (), power_density, (c,))
    if kind == "expectile":
        delta = p[0]

        def expectile_density(x):
            return np.where(np.asarray(x, float) > c, -2.0 * delta, -2.0 * (1.0 - delta))

        return MonotoneDecomposition(c, _zeros, neg, (), expectile_density, (c,))
    if kind == "huber":
        width = p[0]

        def huber_density(x):
            return np.where(np.abs(np.asarray(x, float) - c) < width, -1.0, 0.0)

        return MonotoneDecomposition(c, _zeros, neg, (), huber_density, (c - width, c + width))
    if kind == "esscher":
        delta = p[0]

        def esscher_density(x):
            x = np.asarray(x, float)
            return 2.0 * np.exp(delta * x) * (delta * (c - x) - 1.0)

        if delta == 0.0:
            return MonotoneDecomposition(c, _zeros, neg, (), esscher_density)
        turn = c - 1.0 / delta
        h1, h2 = _split_at(deriv, turn, delta > 0, delta < 0)
        return MonotoneDecomposition(c, h1, h2, (), esscher_density)
    if kind == "g1":
        h1, h2 = _split_at(deriv, 0.5, True, False)
        return MonotoneDecomposition(c, h1, h2, (), lambda x: 1.0 - 2.0 * np.asarray(x, float))
    if kind == "g2":
        delta, b = p

        def g2_h1(x):
            x = np.asarray(x, float)
            return c - np.where(x <= b, np.power(np.maximum(b - x, 0.0), delta), 0.0)

        def g2_h2(x):
            x = np.asarray(x, float)
            return np.where(x > b, np.power(np.maximum(x - b, 0.0), delta), 0.0)

        def g2_density(x):
            x = np.asarray(x, float)
            with np.errstate(divide="ignore"):
                return -delta * np.power(np.abs(x - b), delta - 1.0) * np.sign(x - b)

        return MonotoneDecomposition(c, g2_h1, g2_h2, (), g2_density, (b,))
    if kind == "g3":
        return MonotoneDecomposition(
            c,
            lambda x: np.asarray(x, float).copy(),
            lambda x: (np.asarray(x, float) > c).astype(float),
            ((c, -1.0),),
            lambda x: np.ones_like(np.asarray(x, float)),
        )
    if kind == "g4":
        slope = 1.0 + p[0]
        if slope >= 0:
            h1, h2 = _zeros, neg
        else:
            h1, h2 = deriv, _zeros
        return MonotoneDecomposition(c, h1, h2, (), lambda x: np.full_like(np.asarray(x, float), -slope))
    # signed-mean-ratio: slope -2c left of 0, 2c - 2 right of 0
    h1, h2 = _split_at(deriv, 0.0, -2.0 * c > 0, 2.0 * c - 2.0 > 0)

    def smr_density(x):
        return np.where(np.asarray(x, float) < 0, -2.0 * c, 2.0 * c - 2.0)

    return MonotoneDecomposition(c, h1, h2, (), smr_density, (0.0,))


# ---------------------------------------------------------------------------
# text tokens

_ALIASES = {
    "abs": "abs",
    "absolute": "abs",
    "power": "power",
    "square": "square",
    "quantile": "quantile",
    "expectile": "expectile",
    "huber": "huber",
    "esscher": "esscher",
    "g1": "g1",
    "g2": "g2",
    "g3": "g3",
    "g4": "g4",
    "cens-quantile": "cens-quantile",
    "trimmed": "trimmed",
    "moment-ratio": "moment-ratio",
    "signed-mean-ratio": "signed-mean-ratio",
}


def parse_loss(token: str, censor: DistributionSpec | None = None) -> LossSpec:
    """Parse tokens such as ``abs``, ``quantile:0.5``, ``g2:0.5:0`` or
    ``cens-quantile:0.5:expo:0.111``.

    A ``cens-quantile`` token without a distribution part uses ``censor``.
    """
    text = token.strip().lower()
    head, _, rest = text.partition(":")
    kind = _ALIASES.get(head)
    if kind is None:
        raise ParseError(f"unknown loss {head!r} in {token!r}")
    parts = rest.split(":") if rest else []
    n = _N_PARAMS[kind]
    if kind == "cens-quantile" and len(parts) > n:
        censor = parse_distribution(":".join(parts[n:]))
        parts = parts[:n]
    if len(parts) != n:
        raise ParseError(f"{kind} takes {n} parameter(s) in {token!r}")
    try:
        params = tuple(float(v) for v in parts)
    except ValueError as exc:
        raise ParseError(f"bad number in loss token {token!r}") from exc
    try:
        return LossSpec(kind, params, censor if kind == "cens-quantile" else None)
    except DomainError as exc:
        raise ParseError(str(exc)) from exc
