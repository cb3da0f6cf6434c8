"""Samples, the (n+1)-scaled empirical CDF, Kaplan-Meier and kernel density estimates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError

__all__ = (
    "Sample",
    "StepFunction",
    "ecdf",
    "empirical_quantile",
    "km_cdf",
    "km_quantile",
    "kde",
    "silverman_bandwidth",
    "load_csv",
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """Sorted observations with optional event indicators (True = observed).

    Build with :meth:`from_values`, which sorts values and indicators together.
    """

    values: np.ndarray
    events: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DomainError("a sample is one-dimensional")
        if np.any(np.diff(values) < 0):
            raise DomainError("sample values must be sorted; use Sample.from_values")
        object.__setattr__(self, "values", _frozen(values.copy()))
        if self.events is not None:
            events = np.asarray(self.events, dtype=bool)
            if events.shape != values.shape:
                raise DomainError("censoring indicators must align with the values")
            object.__setattr__(self, "events", _frozen(events.copy()))

    @classmethod
    def from_values(cls, values, events=None) -> Sample:
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise DomainError("sample values must be finite")
        if events is None:
            return cls(np.sort(values, kind="stable"))
        events = np.asarray(events, dtype=bool)
        if events.shape != values.shape:
            raise DomainError("censoring indicators must align with the values")
        # ties: observed events sort ahead of censored times
        order = np.lexsort((~events, values))
        return cls(values[order], events[order])

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def censored(self) -> bool:
        return self.events is not None and not bool(np.all(self.events))

    def ranks(self) -> np.ndarray:
        """Plotting positions ``k / (n + 1)`` of the order statistics."""
        return np.arange(1, self.n + 1) / (self.n + 1)

    def affine(self, scale: float, shift: float) -> Sample:
        """The sample ``scale * x + shift`` for ``scale > 0``."""
        if not scale > 0:
            raise DomainError("scale must be positive")
        return Sample(scale * self.values + shift, self.events)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function: 0 before the first jump, ``levels[i]`` from ``jumps[i]`` on."""

    jumps: np.ndarray
    levels: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.jumps, x, side="right") - 1
        out = np.where(idx >= 0, self.levels[np.maximum(idx, 0)], 0.0)
        return float(out) if out.ndim == 0 else out


def ecdf(sample: Sample) -> StepFunction:
    """``F_n(x) = #{X_i <= x} / (n + 1)``."""
    if sample.n == 0:
        raise DomainError("the empirical CDF needs at least one observation")
    jumps, counts = np.unique(sample.values, return_counts=True)
    return StepFunction(jumps, np.cumsum(counts) / (sample.n + 1))


def empirical_quantile(sample: Sample, p: float) -> float:
    """``X_{k:n}`` with ``(k - 1) / (n + 1) < p <= k / (n + 1)``, clamped to ``k = n``."""
    n = sample.n
    if n == 0:
        raise DomainError("empty sample")
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    k = math.ceil(p * (n + 1))
    # the product can round across an integer; settle k by the defining inequalities
    if k > 1 and (k - 1) / (n + 1) >= p:
        k -= 1
    elif k / (n + 1) < p:
        k += 1
    return float(sample.values[min(max(k, 1), n) - 1])


def km_cdf(sample: Sample) -> StepFunction:
    """Product-limit estimate of the CDF of the uncensored variable.

    Censoring times tied with an event time stay in the risk set at that time.
    """
    if sample.events is None:
        events = np.ones(sample.n, dtype=bool)
    else:
        events = sample.events
    if not np.any(events):
        raise DomainError("all observations are censored")
    y = sample.values
    times = np.unique(y[events])
    at_risk = sample.n - np.searchsorted(y, times, side="left")
    deaths = _deaths(y, events, times)
    surv = np.cumprod(1.0 - deaths / at_risk)
    return StepFunction(times, 1.0 - surv)


def _deaths(y: np.ndarray, events: np.ndarray, times: np.ndarray) -> np.ndarray:
    obs = y[events]
    return np.searchsorted(obs, times, side="right") - np.searchsorted(obs, times, side="left")


def km_quantile(sample: Sample, delta: float) -> float:
    """First event time at which the Kaplan-Meier CDF reaches ``delta``."""
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    cdf = km_cdf(sample)
    # guard against a product of ratios landing one ulp short of an exact crossing
    hit = np.nonzero(cdf.levels >= delta - 1e-12)[0]
    if hit.size == 0:
        raise DomainError(f"the Kaplan-Meier curve never reaches {delta}")
    return float(cdf.jumps[hit[0]])


def silverman_bandwidth(values: np.ndarray) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n^(-1/5)``, falling back to the sd when the IQR is 0."""
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * n ** (-0.2)


def kde(sample: Sample, x):
    """Gaussian kernel density estimate at ``x``.

    The bandwidth starts from Silverman's rule and is widened, point by point,
    until ``[x - h, x + h]`` holds at least ``ceil(0.1 n)`` observations, so
    the estimate never vanishes.
    """
    if sample.n < 5:
        raise DomainError("kernel density estimation needs at least 5 observations")
    data = sample.values
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    base = silverman_bandwidth(data)
    need = math.ceil(0.1 * sample.n)
    dist = np.abs(xs[:, None] - data[None, :])
    reach = np.partition(dist, need - 1, axis=1)[:, need - 1]
    h = np.maximum(base, reach)
    h = np.where(h > 0, h, 1e-12)
    z = dist / h[:, None]
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (sample.n * h * math.sqrt(2 * math.pi))
    return float(dens[0]) if np.ndim(x) == 0 else dens


def load_csv(path: str | Path) -> Sample:
    """Read a CSV with header ``value`` or ``value,event`` (event 1 = observed, 0 = censored)."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header not in (["value"], ["value", "event"]):
            raise ParseError(f"{path}: header must be 'value' or 'value,event', got {','.join(header)!r}")
        has_events = len(header) == 2
        values: list[float] = []
        events: list[bool] = []
        for row_number, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {row_number} has {len(row)} fields, expected {len(header)}")
            try:
                value = float(row[0])
            except ValueError:
                raise ParseError(f"{path}: row {row_number}: non-numeric value {row[0]!r}") from None
            if not math.isfinite(value):
                raise ParseError(f"{path}: row {row_number}: value must be finite")
            values.append(value)
            if has_events:
                flag = row[1].strip()
                if flag not in ("0", "1"):
                    raise ParseError(f"{path}: row {row_number}: event must be 0 or 1, got {flag!r}")
                events.append(flag == "1")
    if not values:
        raise ParseError(f"{path}: no data rows")
    return Sample.from_values(values, events if has_events else None)
