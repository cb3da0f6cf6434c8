"""Asymptotic variances, plug-in variance estimates, population values and
confidence intervals.

Population integrals are taken in ``u = F(x)`` coordinates, where the
singularities of ``d(u)`` and ``1 / f(F^-1(u))`` sit at the endpoints of
(0, 1). Variances are per observation: divide by ``n`` for the variance of
an estimate from ``n`` observations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import expit, logit, ndtri

from ._numerics import _gauss_legendre, bisect_increasing, extrapolate_tail, integrate_unit_tails, unit_rule
from .distortions import DistortionSpec, DistributionSpec, distortion_risk_mean
from .empirical import Sample, ecdf, kde
from .errors import DegenerateSlopeError, DivergenceError, DomainError, UnsupportedError
from .estimators import distortion_weights
from .losses import LossSpec, MonotoneDecomposition, classify, decompose

__all__ = (
    "EstimateResult",
    "QuadratureConfig",
    "avar_square",
    "avar_general",
    "avar_closed",
    "lambda_population",
    "lambda_prime",
    "plugin_variance",
    "population_value",
    "confidence_interval",
    "CLOSED_FORM_CASES",
)

# each clip level shrinks the excluded tails by this factor
_CLIP_FACTOR = 1e-4
_CLIP_LEVELS = 3
_AVAR_REL_TOL = 1e-3


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with optional per-observation variance and confidence interval."""

    point: float
    variance_asym: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    method: str = ""
    flags: tuple[str, ...] = ()
    n: int | None = None

    def __post_init__(self) -> None:
        if self.variance_asym is not None and not self.variance_asym >= 0:
            raise DomainError("variance must be nonnegative")
        if self.ci_low is not None and self.ci_high is not None:
            if not self.ci_low <= self.point <= self.ci_high:
                raise DomainError("confidence interval does not contain the point estimate")


@dataclass(frozen=True)
class QuadratureConfig:
    grid_points: int = 1200
    endpoint_clip: float = 1e-7

    def __post_init__(self) -> None:
        if self.grid_points < 16:
            raise DomainError("grid_points must be at least 16")
        if not 0 < self.endpoint_clip < 0.5:
            raise DomainError("endpoint_clip must lie in (0, 0.5)")

    def clips(self) -> list[float]:
        return [self.endpoint_clip * _CLIP_FACTOR**k for k in range(_CLIP_LEVELS)]

    def points_for(self, clip: float) -> int:
        """Node count that keeps the node density of the base clip."""
        base = -2.0 * float(logit(self.endpoint_clip))
        return int(math.ceil(self.grid_points * (-2.0 * float(logit(clip))) / base))


def _require_density(dist: DistributionSpec) -> None:
    if not dist.is_continuous:
        raise DomainError("asymptotic variances need a distribution with a density")


def _quantile_weight(D: DistortionSpec, dist: DistributionSpec, u, v):
    """``d(u) / f(F^-1(u))``, the Jacobian-weighted distortion density."""
    x = dist.quantile_pair(u, v)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return D.density(u, v) / dist.pdf(x)


def _extrapolated(values: list[float], what: str, corner: Callable[[], str]) -> float:
    estimate, settled = extrapolate_tail(values, _AVAR_REL_TOL)
    if not settled:
        raise DivergenceError(f"{what} does not converge near the {corner()} corner of the unit square")
    return estimate


def _corner_name(evaluate: Callable[[float, float], float], clip: float, small: float) -> str:
    base = evaluate(clip, clip)
    low = abs(evaluate(small, clip) - base)
    high = abs(evaluate(clip, small) - base)
    if not np.isfinite(low):
        low = np.inf
    if not np.isfinite(high):
        high = np.inf
    return "(0, 0)" if low > high else "(1, 1)"


# ---------------------------------------------------------------------------
# square loss: two-dimensional rule


def _square_form(D: DistortionSpec, dist: DistributionSpec, clip: float, clip_hi: float, n_points: int) -> float:
    """``int int (min(u,v) - uv) a(u) a(v) du dv`` over (clip, 1 - clip_hi)^2.

    Tensor Gauss-Legendre over pairs of logit panels. Off-diagonal tiles are
    smooth, and their sum is the sum over all node pairs minus the diagonal
    tiles, which the sorted nodes give in O(N) by cumulative sums. Each
    diagonal tile has a kink along the diagonal and is replaced by a Duffy
    rule on its two triangles.
    """
    rule = unit_rule(clip, n_points, D.breaks(), clip_hi=clip_hi)
    u, v = rule.u, rule.v
    b = rule.weights * _quantile_weight(D, dist, u, v)
    bu, bv = b * u, b * v
    # kernel on sorted nodes: u_i * v_j for i <= j
    lead = np.concatenate([[0.0], np.cumsum(bu)[:-1]])
    all_pairs = 2.0 * float(np.dot(bv, lead)) + float(np.dot(bu, v * b))
    order = rule.order
    n_panels = len(rule.edges) - 1
    bu_p = bu.reshape(n_panels, order)
    bv_p = bv.reshape(n_panels, order)
    tri = np.triu(np.ones((order, order)), 1)
    diag_tiles = 2.0 * float(np.einsum("pi,ij,pj->", bu_p, tri, bv_p)) + float(np.dot(bu, v * b))
    return all_pairs - diag_tiles + _duffy_diagonal(D, dist, rule.edges, order)


def _duffy_diagonal(D: DistortionSpec, dist: DistributionSpec, edges: np.ndarray, order: int) -> float:
    nodes, gw = _gauss_legendre(order)
    xi = 0.5 * (nodes + 1.0)
    wx = 0.5 * gw
    a = edges[:-1, None, None]
    h = (edges[1:] - edges[:-1])[:, None, None]
    t = a + h * xi[None, :, None]  # outer coordinate
    s = a + h * xi[None, :, None] * xi[None, None, :]  # inner coordinate, s <= t
    jac = h * h * xi[None, :, None]
    w = jac * wx[None, :, None] * wx[None, None, :]
    ut, vt = _expit_pair(t)
    us, vs = _expit_pair(s)
    beta_t = _quantile_weight(D, dist, ut, vt) * ut * vt
    beta_s = _quantile_weight(D, dist, us, vs) * us * vs
    return 2.0 * float(np.sum(w * beta_s * us * beta_t * vt))


def _expit_pair(t):
    return expit(t), expit(-t)


def avar_square(D: DistortionSpec, dist: DistributionSpec, q: QuadratureConfig = QuadratureConfig()) -> float:
    """Asymptotic variance of the square-loss estimators.

    ``int int (min(u,v) - uv) d(u) d(v) / (f(F^-1(u)) f(F^-1(v))) du dv`` on
    (0, 1)^2, from truncations at the endpoint clip and two smaller clips
    with the remaining corners extrapolated.
    """
    _require_density(dist)

    def evaluate(lo: float, hi: float) -> float:
        return _square_form(D, dist, lo, hi, q.points_for(min(lo, hi)))

    values = [evaluate(c, c) for c in q.clips()]
    clips = q.clips()
    return _extrapolated(
        values,
        f"the variance integral for {D.token} under {dist.token}",
        lambda: _corner_name(evaluate, clips[0], clips[-1]),
    )


# ---------------------------------------------------------------------------
# general convex losses


def _cumulative(rule, integrand: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """``int_clip^{u_j} integrand(u) du`` at every node ``u_j`` of ``rule``.

    Whole panels to the left are summed from the rule itself; the partial
    panel ending at the node gets its own Gauss-Legendre rule.
    """
    order = rule.order
    n_panels = len(rule.edges) - 1
    values = integrand(rule.u, rule.v)
    panel_sums = (rule.weights * values).reshape(n_panels, order).sum(axis=1)
    before = np.concatenate([[0.0], np.cumsum(panel_sums)[:-1]])
    nodes, gw = _gauss_legendre(order)
    left = rule.edges[rule.panel]
    half = 0.5 * (rule.t - left)
    t = left[:, None] + half[:, None] * (nodes[None, :] + 1.0)
    u, v = _expit_pair(t)
    part = np.sum(half[:, None] * gw[None, :] * u * v * integrand(u, v), axis=1)
    return before[rule.panel] + part


def _sigma2(
    D: DistortionSpec,
    dist: DistributionSpec,
    dec: MonotoneDecomposition,
    clip: float,
    clip_hi: float,
    n_points: int,
) -> float:
    """``int int K(F(x), F(y)) d(F(x)) d(F(y)) dl'(x) dl'(y)`` with ``K(u, v) = min(u, v) - uv``."""
    atoms = [(float(dist.cdf(x)), float(dist.sf(x)), m) for x, m in dec.atoms]
    atom_d = [float(D.density(u, v)) for u, v, _ in atoms]
    breaks = set(D.breaks())
    for x in dec.density_breaks:
        breaks.add(float(dist.cdf(x)))
    for u, _, _ in atoms:
        breaks.add(u)
    breaks = sorted(b for b in breaks if 0.0 < b < 1.0)

    total = 0.0
    for (ui, vi, mi), di in zip(atoms, atom_d):
        for (uj, vj, mj), dj in zip(atoms, atom_d):
            total += mi * mj * di * dj * (min(ui, uj) * (vj if uj >= ui else vi))
    if dec.density is None:
        return total

    def alpha(u, v):
        x = dist.quantile_pair(u, v)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = D.density(u, v) * dec.density(x) / dist.pdf(x)
        return np.where(np.isfinite(out), out, 0.0)

    rule = unit_rule(clip, n_points, breaks, clip_hi=clip_hi)
    u, v = rule.u, rule.v
    a = alpha(u, v)
    lower = _cumulative(rule, lambda uu, vv: uu * alpha(uu, vv))
    total += 2.0 * rule.integrate(v * a * lower)
    for (uk, vk, mk), dk in zip(atoms, atom_d):
        below = u < uk
        left = rule.integrate(np.where(below, u * a, 0.0))
        right = rule.integrate(np.where(below, 0.0, v * a))
        total += 2.0 * mk * dk * (vk * left + uk * right)
    return total


def lambda_population(D: DistortionSpec, dist: DistributionSpec, loss: LossSpec, c: float) -> float:
    """``lambda_F(c) = int d(F(x)) l'(x, c) dF(x) = int_0^1 d(u) l'(F^-1(u), c) du``."""
    if not dist.is_continuous:
        pts = np.asarray(dist.params)
        grid = np.arange(len(pts) + 1) / len(pts)
        masses = np.diff(D.cdf(grid))
        return float(np.dot(masses, loss.deriv(pts, c)))
    breaks = set(D.breaks())
    for k in loss.kinks(c):
        breaks.add(float(dist.cdf(k)))
    breaks = sorted(b for b in breaks if 0.0 < b < 1.0)

    def integrand(u, v):
        x = dist.quantile_pair(u, v)
        out = D.density(u, v) * loss.deriv(x, c)
        return np.where(np.isfinite(out), out, np.nan)

    value, settled = integrate_unit_tails(integrand, breaks)
    if not settled:
        raise DivergenceError(f"lambda_F({c}) for {loss.token} under {D.token} does not converge")
    return value


def lambda_prime(D: DistortionSpec, dist: DistributionSpec, loss: LossSpec, t0: float) -> float:
    """``lambda_F'(t0)``: closed forms for square, abs, quantile and g2 losses, else a central difference."""
    kind = loss.kind
    if kind == "square":
        return 2.0
    if kind == "g2":
        return 1.0
    if kind in ("abs", "quantile") or (kind == "power" and loss.params[0] == 1.0):
        _require_density(dist)
        dens = float(dist.pdf(t0)) * float(D.density(dist.cdf(t0), dist.sf(t0)))
        return 2.0 * dens if kind != "quantile" else dens
    h = max(1e-5, 1e-5 * abs(t0))
    return (lambda_population(D, dist, loss, t0 + h) - lambda_population(D, dist, loss, t0 - h)) / (2.0 * h)


def avar_general(
    D: DistortionSpec,
    dist: DistributionSpec,
    loss: LossSpec,
    t0: float,
    q: QuadratureConfig = QuadratureConfig(),
) -> float:
    """``sigma^2_{t0} / lambda_F'(t0)^2`` for a convex loss.

    The derivative measure of ``x -> l'(x, t0)`` splits into atoms and a
    density. Atom pairs are kernel evaluations, atom-density cross terms are
    one-dimensional integrals split at the atom, and the density-density term
    is reduced to a nested one-dimensional integral using the product form of
    the kernel on each side of the diagonal.
    """
    _require_density(dist)
    dec = decompose(loss, t0)
    slope = lambda_prime(D, dist, loss, t0)
    if not abs(slope) >= 1e-10:
        raise DegenerateSlopeError(f"lambda_F'({t0}) = {slope} is numerically zero for {loss.token} under {D.token}")

    def evaluate(lo: float, hi: float) -> float:
        return _sigma2(D, dist, dec, lo, hi, q.points_for(min(lo, hi)))

    clips = q.clips()
    values = [evaluate(c, c) for c in clips]
    sigma2 = _extrapolated(
        values,
        f"sigma^2 for {loss.token} under {D.token} and {dist.token}",
        lambda: _corner_name(evaluate, clips[0], clips[-1]),
    )
    return sigma2 / slope**2


# ---------------------------------------------------------------------------
# closed forms

CLOSED_FORM_CASES = ("abs", "quantile", "expectile", "expectile_hk", "censored_loss", "censored_km")


def avar_closed(case: str, **params) -> float:
    """Closed-form asymptotic variances.

    ``abs`` (D, dist): ``m(1 - m) / f(Median(X_D))^2`` with ``m`` the median of D.
    ``quantile`` (D, dist, delta): ``F(t0)(1 - F(t0)) / f(t0)^2`` at the delta-quantile of ``X_D``.
    ``expectile`` (D, dist, delta, t0=None): three-block numerator over the squared slope.
    ``expectile_hk`` (dist, delta): ``E[I^2] / [delta(1 - F(t0)) + (1 - delta) F(t0)]^2``
    by x-space quadrature, valid for the uniform distortion only.
    ``censored_loss`` (dist, delta, censor=None): ``F(1 - F) / (f_X - (1 - delta) f_C)^2`` at ``q_delta(X)``.
    ``censored_km`` (dist, delta, censor=None): the Kaplan-Meier quantile variance.
    """
    if case not in CLOSED_FORM_CASES:
        raise DomainError(f"unknown closed-form case {case!r}; choose from {', '.join(CLOSED_FORM_CASES)}")
    dist: DistributionSpec = params["dist"]
    _require_density(dist)
    if case == "abs":
        D = params["D"]
        m = float(D.inverse(0.5))
        t0 = float(dist.quantile(m))
        return _ratio(m * (1.0 - m), float(dist.pdf(t0)) ** 2)
    if case == "quantile":
        D, delta = params["D"], params["delta"]
        t0 = float(dist.quantile(D.inverse(delta)))
        F = float(dist.cdf(t0))
        return _ratio(F * (1.0 - F), float(dist.pdf(t0)) ** 2)
    if case == "expectile":
        return _expectile_blocks(params["D"], dist, params["delta"], params.get("t0"), params.get("q", QuadratureConfig()))
    if case == "expectile_hk":
        return _expectile_hk(dist, params["delta"])
    delta = params["delta"]
    censor: DistributionSpec | None = params.get("censor")
    t0 = float(dist.quantile(delta))
    F = float(dist.cdf(t0))
    f = float(dist.pdf(t0))
    if case == "censored_loss":
        f_c = float(censor.pdf(t0)) if censor is not None else 0.0
        return _ratio(F * (1.0 - F), (f - (1.0 - delta) * f_c) ** 2)

    def hazard_part(x: float) -> float:
        s_c = float(censor.sf(x)) if censor is not None else 1.0
        return float(dist.pdf(x)) / (float(dist.sf(x)) ** 2 * s_c)

    lo = dist.support[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        integral = integrate.quad(hazard_part, lo, t0, limit=200, epsabs=1e-13, epsrel=1e-11)[0]
    return _ratio((1.0 - delta) ** 2 * integral, f * f)


def _ratio(num: float, den: float) -> float:
    if not den > 0:
        raise DegenerateSlopeError("the density in the denominator vanishes")
    return num / den


def _expectile_blocks(D, dist, delta, t0, q: QuadratureConfig) -> float:
    """Numerator ``4 delta^2 I_hh - 8 delta (delta - 1) I_hl + 4 (delta - 1)^2 I_ll`` over
    ``(-4 delta D(F(t0)) + 2 delta + 2 D(F(t0)))^2``."""
    if t0 is None:
        t0 = population_value(D, dist, LossSpec("expectile", (delta,)))
    u0 = float(dist.cdf(t0))
    Dt = float(D.cdf(u0))

    def blocks(clip: float) -> float:
        rule = unit_rule(clip, q.points_for(clip), sorted({u0, *D.breaks()}))
        u, v = rule.u, rule.v

        def ua(uu, vv):
            return uu * np.nan_to_num(_quantile_weight(D, dist, uu, vv), posinf=0.0)

        a = np.nan_to_num(_quantile_weight(D, dist, u, v), posinf=0.0)
        low = u < u0
        inner = _cumulative(rule, ua)
        inner_at_u0 = rule.integrate(np.where(low, u * a, 0.0))
        i_ll = 2.0 * rule.integrate(np.where(low, v * a * inner, 0.0))
        i_hh = 2.0 * rule.integrate(np.where(low, 0.0, v * a * (inner - inner_at_u0)))
        i_hl = inner_at_u0 * rule.integrate(np.where(low, 0.0, v * a))
        return 4 * delta**2 * i_hh - 8 * delta * (delta - 1) * i_hl + 4 * (delta - 1) ** 2 * i_ll

    numerator = _extrapolated([blocks(c) for c in q.clips()], "the expectile variance numerator", lambda: "(1, 1)")
    return _ratio(numerator, (-4 * delta * Dt + 2 * delta + 2 * Dt) ** 2)


def _expectile_hk(dist: DistributionSpec, delta: float) -> float:
    lo, hi = dist.support

    def moment(fn, a, b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return integrate.quad(lambda x: fn(x) * float(dist.pdf(x)), a, b, limit=400, epsabs=1e-14, epsrel=1e-12)[0]

    def identification(t):
        up = moment(lambda x: x - t, t, hi)
        down = moment(lambda x: t - x, lo, t)
        return delta * up - (1.0 - delta) * down

    a, b = float(dist.quantile(1e-6)), float(dist.quantile(1 - 1e-6))
    t0 = optimize.brentq(identification, a, b, xtol=1e-14, rtol=1e-14)
    second = delta**2 * moment(lambda x: (x - t0) ** 2, t0, hi) + (1 - delta) ** 2 * moment(lambda x: (t0 - x) ** 2, lo, t0)
    F = float(dist.cdf(t0))
    return _ratio(second, (delta * (1.0 - F) + (1.0 - delta) * F) ** 2)


# ---------------------------------------------------------------------------
# plug-in variance, population values, intervals


def plugin_variance(sample: Sample, D: DistortionSpec, loss: LossSpec, point: float) -> float:
    """Sample version of the asymptotic variance.

    Quantile and absolute losses use ``[F_n(T) - F_n(T)^2] / fhat(T)^2`` with a
    kernel density estimate. Square loss plugs the empirical CDF into the
    double integral, which becomes a double sum over gaps between order
    statistics, evaluated in O(n).
    """
    kind = loss.kind
    if kind in ("quantile", "abs"):
        F = float(ecdf(sample)(point))
        dens = float(kde(sample, point))
        return (F - F * F) / dens**2
    if kind == "square":
        n = sample.n
        if n < 2:
            return 0.0
        i = np.arange(1, n)
        u = i / (n + 1)
        v = (n + 1 - i) / (n + 1)
        c = distortion_weights(n, D)[:-1] * np.diff(sample.values)
        cu, cv = c * u, c * v
        lead = np.concatenate([[0.0], np.cumsum(cu)[:-1]])
        return max(0.0, 2.0 * float(np.dot(cv, lead)) + float(np.dot(cu, cv)))
    raise UnsupportedError(
        f"no plug-in variance for {kind}; fit a parametric distribution and use avar_general"
    )


def population_value(D: DistortionSpec, dist: DistributionSpec, loss: LossSpec) -> float:
    """The generalized extremile ``t0``: the smallest root of ``lambda_F``."""
    kind = loss.kind
    if not classify(loss).convex:
        raise UnsupportedError(f"{kind} is not convex; its population value has no root characterisation")
    if kind == "square":
        return distortion_risk_mean(D, dist)
    if kind in ("abs", "quantile") or (kind == "power" and loss.params[0] == 1.0):
        level = loss.params[0] if kind == "quantile" else 0.5
        return float(dist.quantile(D.inverse(level)))
    if kind == "g2" and dist.is_continuous:
        delta, b = loss.params

        def moment(u, v):
            return D.density(u, v) * np.power(np.abs(dist.quantile_pair(u, v) - b), delta)

        value, settled = integrate_unit_tails(moment, sorted({*D.breaks(), float(dist.cdf(b))} - {0.0, 1.0}))
        if not settled:
            raise DivergenceError(f"E|X_D - {b}|^{delta} does not converge")
        return value

    def lam(c: float) -> float:
        return lambda_population(D, dist, loss, c)

    lo, hi = _initial_bracket(D, dist)
    width = max(hi - lo, 1.0)
    for _ in range(60):
        if lam(lo) < 0:
            break
        lo -= width
        width *= 2
    else:
        raise DivergenceError(f"no sign change of lambda_F below {lo}")
    width = max(hi - lo, 1.0)
    for _ in range(60):
        if lam(hi) >= 0:
            break
        hi += width
        width *= 2
    else:
        raise DivergenceError(f"no sign change of lambda_F above {hi}")
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    root = bisect_increasing(lambda c: np.array(lam(float(c))), np.array(0.0), lo, hi, tol=tol)
    return float(root)


def _initial_bracket(D: DistortionSpec, dist: DistributionSpec) -> tuple[float, float]:
    if not dist.is_continuous:
        return float(dist.params[0]), float(dist.params[-1])
    lo = float(dist.quantile(D.inverse(0.05)))
    hi = float(dist.quantile(D.inverse(0.95)))
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        lo, hi = float(dist.quantile(0.05)), float(dist.quantile(0.95))
    return lo, hi


def confidence_interval(point: float, variance_asym: float, n: int, level: float) -> tuple[float, float]:
    """``point -/+ z_{(1+level)/2} * sqrt(variance_asym / n)``."""
    if not variance_asym >= 0:
        raise DomainError("variance must be nonnegative")
    if n < 1:
        raise DomainError("n must be at least 1")
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    half = float(ndtri(0.5 * (1.0 + level))) * math.sqrt(variance_asym / n)
    return point - half, point + half
