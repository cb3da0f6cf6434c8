"""Small numerical building blocks: monotone bisection and unit-interval quadrature.

Integrals over (0, 1) are taken in logit coordinates ``t = log(u / (1 - u))``.
Singularities of distortion densities and of ``1 / f(F^-1(u))`` live at the
endpoints, and the logit map turns them into smooth, decaying tails that a
composite Gauss-Legendre rule handles well.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np
from scipy.special import expit, logit

GAUSS_ORDER = 16


@lru_cache(maxsize=8)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def bisect_increasing(
    fn: Callable[[np.ndarray], np.ndarray],
    target: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> np.ndarray:
    """Vectorised bisection for ``fn(x) = target`` with ``fn`` nondecreasing.

    Returns the smallest point (to ``tol``) where ``fn`` reaches ``target``.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    for _ in range(max_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        above = fn(mid) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return hi


@dataclass(frozen=True)
class UnitRule:
    """Composite Gauss-Legendre nodes on (clip, 1 - clip) in logit coordinates.

    ``u`` are the nodes and ``v = 1 - u`` their complements, computed without
    cancellation. ``weights`` integrate functions of ``u`` against du, ``t``
    are the logit coordinates and ``panel`` the panel index of each node.
    ``edges`` holds the panel boundaries in logit coordinates.
    """

    u: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    t: np.ndarray
    panel: np.ndarray
    edges: np.ndarray
    order: int

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def unit_rule(
    clip: float,
    n_points: int,
    breaks: Iterable[float] = (),
    order: int = GAUSS_ORDER,
    clip_hi: float | None = None,
) -> UnitRule:
    """Build a :class:`UnitRule` with roughly ``n_points`` nodes.

    Panels are uniform in logit coordinates; every break point inside
    (clip, 1 - clip) becomes an extra panel edge so that jumps and kinks of the
    integrand never fall inside a panel. ``clip_hi`` sets a different clip
    at the upper end.
    """
    t_lo = float(logit(clip))
    t_hi = -float(logit(clip if clip_hi is None else clip_hi))
    n_panels = max(1, int(round(n_points / order)))
    edges = np.linspace(t_lo, t_hi, n_panels + 1)
    upper = clip if clip_hi is None else clip_hi
    extra = [float(logit(b)) for b in breaks if clip < b < 1.0 - upper]
    if extra:
        edges = np.unique(np.concatenate([edges, extra]))
        # drop slivers produced by a break landing next to a regular edge
        keep = np.concatenate([[True], np.diff(edges) > 1e-12])
        edges = edges[keep]
    nodes, gw = _gauss_legendre(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    t = (0.5 * (a + b) + half * nodes[None, :]).ravel()
    wt = (half * gw[None, :]).ravel()
    u = expit(t)
    v = expit(-t)
    weights = wt * u * v
    panel = np.repeat(np.arange(len(edges) - 1), order)
    return UnitRule(u=u, v=v, weights=weights, t=t, panel=panel, edges=edges, order=order)


def integrate_unit(
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    breaks: Iterable[float] = (),
    clip: float = 1e-15,
    n_points: int = 1200,
) -> float:
    """Integrate ``fn(u, 1 - u)`` over (clip, 1 - clip)."""
    rule = unit_rule(clip, n_points, breaks)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        values = fn(rule.u, rule.v)
    return rule.integrate(values)


def integrate_unit_tails(
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    breaks: Iterable[float] = (),
    clips: tuple[float, ...] = (1e-8, 1e-16, 1e-24, 1e-32),
    points_per_unit: float = 24.0,
    rel_tol: float = 1e-4,
) -> tuple[float, bool]:
    """Integrate ``fn(u, 1 - u)`` over (0, 1) by pushing the endpoint clip outward.

    Each clip level adds the mass of a thinner tail. The increments of an
    integrable endpoint singularity shrink geometrically, so the remainder is
    extrapolated from the last two increments. Returns the estimate and
    whether the tail sequence settled within ``rel_tol``.
    """
    values = []
    for clip in clips:
        width = -2.0 * float(logit(clip))
        values.append(integrate_unit(fn, breaks, clip, int(points_per_unit * width)))
    return extrapolate_tail(values, rel_tol)


def extrapolate_tail(values, rel_tol: float = 1e-4) -> tuple[float, bool]:
    """Limit of a sequence of truncated integrals whose increments shrink geometrically.

    Returns the extrapolated value and whether the sequence settled: the
    increments must shrink and the extrapolated remainder must stay within
    ``rel_tol`` of the value.
    """
    values = [float(v) for v in values]
    steps = np.diff(values)
    estimate = values[-1]
    settled = bool(np.all(np.isfinite(values)))
    negligible = 1e-13 * max(1.0, abs(estimate))
    if settled and abs(steps[-1]) > negligible:
        ratio = steps[-1] / steps[-2] if steps[-2] != 0 else np.inf
        if abs(ratio) < 1:
            estimate += steps[-1] * ratio / (1.0 - ratio)
        else:
            settled = False
    scale = max(1.0, abs(estimate))
    if settled and abs(estimate - values[-1]) > rel_tol * scale:
        settled = False
    return float(estimate), settled
