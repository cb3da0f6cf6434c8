"""Sample estimators of generalized extremiles.

Weights come from the distortion density at the plotting positions
``k / (n + 1)``, so the density is never evaluated at 0 or 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distortions import DistortionSpec
from .empirical import Sample, km_quantile
from .errors import BreakdownError, DomainError, NoMinimumError, UnsupportedError
from .losses import LossSpec, classify

__all__ = (
    "RootConfig",
    "GridConfig",
    "RootResult",
    "distortion_weights",
    "estimate_square_L",
    "estimate_square_LM",
    "estimate_square_M",
    "lambda_star",
    "empirical_objective",
    "fit_mroot",
    "estimate_mroot",
    "estimate_grid",
    "estimate_km",
)


@dataclass(frozen=True)
class RootConfig:
    bracket_pad: float = 0.5
    tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if not self.bracket_pad >= 0:
            raise DomainError("bracket_pad must be nonnegative")


@dataclass(frozen=True)
class GridConfig:
    step: float = 0.01
    lookahead: int = 20
    slope_threshold: float = 0.01

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise DomainError("step must be positive")
        if self.lookahead < 1:
            raise DomainError("lookahead must be at least 1")


@dataclass(frozen=True)
class RootResult:
    """Root of the empirical estimating equation and how it was found.

    ``flags`` may contain ``plateau`` (the slope is exactly zero at the root,
    so the leftmost point of a flat stretch was taken), ``bracket_expanded``
    and ``no_sign_change`` (no root in the widest bracket; the endpoint with
    the smallest absolute slope is returned).
    """

    value: float
    flags: tuple[str, ...] = ()


def distortion_weights(n: int, D: DistortionSpec) -> np.ndarray:
    """``d(k / (n + 1))`` for ``k = 1..n``."""
    if n < 1:
        raise DomainError("need at least one observation")
    return np.asarray(D.density(np.arange(1, n + 1) / (n + 1)), dtype=float)


def estimate_square_L(sample: Sample, D: DistortionSpec) -> float:
    """L-statistic ``sum_k (D(k/(n+1)) - D((k-1)/(n+1))) X_{k:n}``."""
    n = sample.n
    levels = D.cdf(np.arange(n + 1) / (n + 1))
    levels[0] = 0.0
    return float(np.dot(np.diff(levels), sample.values))


def estimate_square_LM(sample: Sample, D: DistortionSpec) -> float:
    """``(1/n) sum_i d(i/(n+1)) X_{i:n}``."""
    w = distortion_weights(sample.n, D)
    return float(np.dot(w, sample.values)) / sample.n


def estimate_square_M(sample: Sample, D: DistortionSpec) -> float:
    """Self-normalised version of :func:`estimate_square_LM`."""
    w = distortion_weights(sample.n, D)
    total = float(np.sum(w))
    if not total > 0:
        raise BreakdownError(
            f"all distortion weights vanish for n={sample.n} under {D.token}; the estimate is undefined"
        )
    # centred at the smallest value so that a constant sample returns that constant exactly
    x = sample.values
    return float(x[0]) + float(np.dot(w, x - x[0])) / total


class _Slope:
    """``lambda*(c)`` for one (sample, distortion, loss) triple, weights cached."""

    def __init__(self, sample: Sample, D: DistortionSpec, loss: LossSpec):
        self.x = sample.values
        self.n = sample.n
        self.loss = loss
        self.w = distortion_weights(self.n, D)
        self.cum = np.cumsum(self.w)

    def __call__(self, c: float) -> float:
        return self.loss.weighted_slope(self.x, self.w, c, self.cum) / self.n


def lambda_star(sample: Sample, D: DistortionSpec, loss: LossSpec, c: float) -> float:
    """``(1/n) sum_i d(F_n(X_i)) l'(X_i, c)``."""
    return _Slope(sample, D, loss)(float(c))


def empirical_objective(sample: Sample, D: DistortionSpec, loss: LossSpec, c) -> np.ndarray | float:
    """``(1/n) sum_i d(F_n(X_i)) (l(X_i, c) - l(X_i, 0))``, whose right derivative is ``lambda*``."""
    w = distortion_weights(sample.n, D)
    x = sample.values
    cs = np.atleast_1d(np.asarray(c, dtype=float))
    base = float(np.dot(w, loss.value(x, 0.0)))
    out = np.array([float(np.dot(w, loss.value(x, ci))) for ci in cs]) - base
    out /= sample.n
    return float(out[0]) if np.ndim(c) == 0 else out


def _bisect(slope: _Slope, lo: float, hi: float, cfg: RootConfig) -> float:
    """Smallest ``c`` in ``(lo, hi]`` with ``slope(c) >= 0``, given ``slope(lo) < 0 <= slope(hi)``."""
    a, b = lo, hi
    for _ in range(cfg.max_iter):
        if hi - lo <= cfg.tol * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if slope(mid) >= 0:
            hi = mid
        else:
            lo = mid
    # the secant through the segment ends is well conditioned; inside the
    # final bracket both slopes are tiny and carry large relative error
    for left, right in ((a, b), (lo, hi)):
        c = _secant(slope, left, right)
        if c is not None and lo < c <= hi:
            return _settle(slope, c, lo, hi)
    return hi


def _secant(slope: _Slope, left: float, right: float) -> float | None:
    s_left, s_right = slope(left), slope(right)
    if not s_left < 0 < s_right:
        return None
    return left - s_left * (right - left) / (s_right - s_left)


def _settle(slope: _Slope, c: float, lo: float, hi: float) -> float:
    """Smallest float near ``c`` with a nonnegative slope, given ``slope(lo) < 0 <= slope(hi)``.

    Rounding in the slope sum leaves a band of a few hundred ulps around the
    exact root, so ``c`` is bracketed with steps doubling from one ulp and the
    bracket is then bisected down to adjacent floats.
    """
    step = math.ulp(c)
    if slope(c) >= 0:
        left, right = c - step, c
        while left > lo and slope(left) >= 0:
            right, step = left, 2 * step
            left = c - step
        left = max(left, lo)
    else:
        left, right = c, c + step
        while right < hi and slope(right) < 0:
            left, step = right, 2 * step
            right = c + step
        right = min(right, hi)
    while True:
        mid = 0.5 * (left + right)
        if not left < mid < right:
            return right
        if slope(mid) >= 0:
            right = mid
        else:
            left = mid


def fit_mroot(
    sample: Sample, D: DistortionSpec, loss: LossSpec, cfg: RootConfig = RootConfig()
) -> RootResult:
    """``inf{c : lambda*(c) >= 0}`` for a convex loss.

    The order statistic bracketing the root is found by binary search over
    ranks, then the root is refined by bisection between neighbouring order
    statistics. When the slope is still negative just left of ``X_{k:n}`` the
    root is exactly ``X_{k:n}``, which is how quantile-type losses return
    order statistics without round-off.
    """
    if not classify(loss).convex:
        raise UnsupportedError(f"{loss.kind} is not convex; use estimate_grid")
    if sample.n == 0:
        raise DomainError("empty sample")
    slope = _Slope(sample, D, loss)
    x = sample.values
    flags: list[str] = []

    lo_k, hi_k = 0, sample.n  # smallest k with slope(x[k]) >= 0, or n if none
    while lo_k < hi_k:
        mid = (lo_k + hi_k) // 2
        if slope(float(x[mid])) >= 0:
            hi_k = mid
        else:
            lo_k = mid + 1
    k = lo_k

    if 0 < k < sample.n:
        return _finish(slope, _bisect(slope, float(x[k - 1]), float(x[k]), cfg), flags)

    width = float(x[-1] - x[0])
    if width <= 0:
        width = max(1.0, abs(float(x[0])))
    pad = cfg.bracket_pad if cfg.bracket_pad > 0 else 0.5
    for attempt in range(3):
        reach = pad * (2**attempt) * width
        if k == 0:
            edge = float(x[0]) - reach
            if slope(edge) < 0:
                return _finish(slope, _bisect(slope, edge, float(x[0]), cfg), flags)
        else:
            edge = float(x[-1]) + reach
            if slope(edge) >= 0:
                return _finish(slope, _bisect(slope, float(x[-1]), edge, cfg), flags)
        if "bracket_expanded" not in flags:
            flags.append("bracket_expanded")
    # no sign change anywhere in the widest bracket
    inner = float(x[0]) if k == 0 else float(x[-1])
    best = min((edge, inner), key=lambda c: (abs(slope(c)), c))
    flags.append("no_sign_change")
    return RootResult(best, tuple(flags))


def _finish(slope: _Slope, value: float, flags: list[str]) -> RootResult:
    # a zero that persists to the right is a flat stretch, not an isolated crossing
    if slope(value) == 0.0 and slope(value + 1e-9 * max(1.0, abs(value))) == 0.0:
        flags.append("plateau")
    return RootResult(value, tuple(flags))


def estimate_mroot(
    sample: Sample, D: DistortionSpec, loss: LossSpec, cfg: RootConfig = RootConfig()
) -> float:
    """Point value of :func:`fit_mroot`."""
    return fit_mroot(sample, D, loss, cfg).value


def estimate_grid(
    sample: Sample, D: DistortionSpec, loss: LossSpec, cfg: GridConfig = GridConfig()
) -> float:
    """Local-minimum search on an equispaced grid, for losses that are not convex.

    Grid points run from ``min(Y)`` to ``max(Y)`` in steps of ``cfg.step``.
    The first grid point ``c_m`` past which the weighted total
    ``S(c) = sum_i d(F_n(Y_i)) l(Y_i, c)`` rises with every difference quotient
    ``(S(c_{m+j}) - S(c_m)) / (j * step)``, ``j = 1..lookahead``, above
    ``cfg.slope_threshold`` is returned. ``S`` is ``n`` times the empirical
    objective, so its slope is ``n * lambda*``: the threshold only screens out
    flat stretches and does not push the answer past the root.
    """
    if sample.n == 0:
        raise DomainError("empty sample")
    x = sample.values
    w = distortion_weights(sample.n, D)
    lo, hi = float(x[0]), float(x[-1])
    n_grid = int(math.floor((hi - lo) / cfg.step + 1e-9)) + 1
    look = cfg.lookahead
    quotient_scale = cfg.step * np.arange(1, look + 1)
    chunk = 1024
    for start in range(0, n_grid, chunk):
        stop = min(n_grid, start + chunk)
        grid = lo + cfg.step * np.arange(start, stop + look)
        obj = _objective_on_grid(x, w, loss, grid)
        # row m holds obj[m], obj[m+1], ..., obj[m+look]
        windows = np.lib.stride_tricks.sliding_window_view(obj, look + 1)[: stop - start]
        quotients = (windows[:, 1:] - windows[:, :1]) / quotient_scale
        hits = np.nonzero(np.all(quotients > cfg.slope_threshold, axis=1))[0]
        if hits.size:
            return float(grid[hits[0]])
    raise NoMinimumError(
        f"no grid point in [{lo}, {hi}] has {look} rising difference quotients above {cfg.slope_threshold}"
    )


def _objective_on_grid(x: np.ndarray, w: np.ndarray, loss: LossSpec, grid: np.ndarray) -> np.ndarray:
    block = max(1, 2_000_000 // max(1, x.size))
    out = np.empty(grid.size)
    for s in range(0, grid.size, block):
        g = grid[s : s + block]
        out[s : s + block] = loss.value(x[None, :], g[:, None]) @ w
    return out


def estimate_km(sample: Sample, delta: float) -> float:
    """Kaplan-Meier quantile of level ``delta`` for right-censored data."""
    return km_quantile(sample, delta)
