"""Seeded Monte Carlo studies: repeated sampling, estimation and error summaries.

Replication ``r`` of a study with seed ``s`` draws from
``numpy.random.default_rng([s, r])``, so each replication is reproducible on
its own and the report does not depend on the order replications run in.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distortions import DistortionSpec, DistributionSpec, distortion_risk_mean, parse_distortion, parse_distribution
from .empirical import Sample, silverman_bandwidth
from .errors import BreakdownError, DivergenceError, DomainError, NoMinimumError, ParseError, UnsupportedError
from .estimators import (
    estimate_grid,
    estimate_km,
    estimate_mroot,
    estimate_square_L,
    estimate_square_LM,
    estimate_square_M,
)
from .inference import population_value
from .losses import LossSpec, classify, parse_loss

__all__ = (
    "ESTIMATORS",
    "StudyConfig",
    "McReport",
    "censoring_for_proportion",
    "generate_censored",
    "replicate",
    "run_study",
    "density_of_scaled_errors",
    "parse_study_text",
    "load_study_file",
)

ESTIMATORS = ("L", "LM", "M", "mroot", "grid", "km")

# replication-level failures that are counted instead of aborting the study
_RECOVERABLE = (BreakdownError, NoMinimumError, DivergenceError)


def censoring_for_proportion(p: float) -> DistributionSpec | None:
    """``Expo(rate = p / (1 - p))``; against ``X ~ Expo(1)`` this censors a fraction ``p``."""
    if not 0 <= p < 1:
        raise DomainError("censoring proportion must lie in [0, 1)")
    if p == 0:
        return None
    return DistributionSpec.exponential(p / (1.0 - p))


@dataclass(frozen=True)
class StudyConfig:
    dist: DistributionSpec
    D: DistortionSpec
    loss: LossSpec
    n: int
    reps: int = 500
    seed: int = 0
    estimator: str = "mroot"
    censor_p: float | None = None

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise DomainError(f"estimator must be one of {', '.join(ESTIMATORS)}, got {self.estimator!r}")
        if self.reps < 2:
            raise DomainError("reps must be at least 2")
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.censor_p is not None and not 0 <= self.censor_p < 1:
            raise DomainError("censoring proportion must lie in [0, 1)")
        # the censored quantile loss needs F_C; take it from the censoring proportion
        if self.loss.kind == "cens-quantile" and self.loss.censor is None and self.censor is not None:
            object.__setattr__(self, "loss", LossSpec("cens-quantile", self.loss.params, self.censor))

    @property
    def censor(self) -> DistributionSpec | None:
        return None if self.censor_p is None else censoring_for_proportion(self.censor_p)

    @property
    def label(self) -> str:
        parts = [
            f"dist={self.dist.token}",
            f"distortion={self.D.token}",
            f"loss={self.loss.token}",
            f"n={self.n}",
            f"estimator={self.estimator}",
        ]
        if self.censor_p is not None:
            parts.append(f"p_c={self.censor_p:g}")
        return " ".join(parts)


@dataclass(frozen=True, eq=False)
class McReport:
    """Moments of the estimates around ``t0`` with the variance divisor ``reps - failures``,
    so that ``mse = bias^2 + variance``."""

    config: StudyConfig
    t0: float
    bias: float
    variance: float
    mse: float
    estimates: np.ndarray
    scaled_errors: np.ndarray
    failures: int

    @property
    def completed(self) -> int:
        return int(self.estimates.size)


def generate_censored(
    dist: DistributionSpec,
    censor: DistributionSpec | None,
    n: int,
    seed: int | np.random.Generator,
) -> Sample:
    """Pairs ``(min(X, C), 1{X <= C})``; without a censor every event is observed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = dist.sample(n, rng)
    if censor is None:
        return Sample.from_values(x, np.ones(n, dtype=bool))
    c = censor.sample(n, rng)
    return Sample.from_values(np.minimum(x, c), x <= c)


def target_value(cfg: StudyConfig) -> float:
    """Population value the estimator aims at."""
    est, loss = cfg.estimator, cfg.loss
    if est in ("L", "LM", "M"):
        return distortion_risk_mean(cfg.D, cfg.dist)
    if est == "km" or loss.kind == "cens-quantile":
        if loss.kind not in ("quantile", "cens-quantile"):
            raise DomainError("the Kaplan-Meier estimator targets a quantile; use a quantile-type loss")
        # censoring does not move the target: it is the delta-quantile of X
        return float(cfg.dist.quantile(loss.params[0]))
    if est == "mroot" and not classify(loss).convex:
        raise UnsupportedError(f"mroot needs a convex loss; {loss.kind} is not, use estimator=grid")
    return population_value(cfg.D, cfg.dist, loss)


def _estimate(cfg: StudyConfig, sample: Sample) -> float:
    est = cfg.estimator
    if est == "L":
        return estimate_square_L(sample, cfg.D)
    if est == "LM":
        return estimate_square_LM(sample, cfg.D)
    if est == "M":
        return estimate_square_M(sample, cfg.D)
    if est == "mroot":
        return estimate_mroot(sample, cfg.D, cfg.loss)
    if est == "grid":
        return estimate_grid(sample, cfg.D, cfg.loss)
    return estimate_km(sample, cfg.loss.params[0])


def replicate(cfg: StudyConfig, r: int) -> float:
    """Estimate from replication ``r``; NaN when the estimator fails on that draw."""
    rng = np.random.default_rng([cfg.seed, r])
    sample = generate_censored(cfg.dist, cfg.censor, cfg.n, rng)
    try:
        return float(_estimate(cfg, sample))
    except _RECOVERABLE:
        return math.nan


def run_study(cfg: StudyConfig) -> McReport:
    """Run ``cfg.reps`` replications and summarise the estimates around ``t0``."""
    try:
        t0 = target_value(cfg)
    except (DomainError, UnsupportedError, ArithmeticError) as exc:
        raise DomainError(f"cannot determine the target value for [{cfg.label}]: {exc}") from exc
    raw = np.array([replicate(cfg, r) for r in range(cfg.reps)])
    ok = np.isfinite(raw)
    estimates = raw[ok]
    failures = int(cfg.reps - estimates.size)
    if estimates.size == 0:
        return McReport(cfg, t0, math.nan, math.nan, math.nan, estimates, estimates, failures)
    errors = estimates - t0
    bias = float(np.mean(errors))
    variance = float(np.mean((errors - bias) ** 2))
    mse = float(np.mean(errors**2))
    scaled = math.sqrt(cfg.n) * errors
    return McReport(cfg, t0, bias, variance, mse, estimates, scaled, failures)


def density_of_scaled_errors(report: McReport, grid) -> np.ndarray:
    """Gaussian kernel density of ``sqrt(n)(T - t0)`` on ``grid``, Silverman bandwidth.

    Returns an array of ``(x, density)`` rows. When all errors coincide the
    bandwidth is zero and the mass is put on the grid point nearest to them.
    """
    errors = report.scaled_errors
    if errors.size < 30:
        raise DomainError("need at least 30 completed replications for a density estimate")
    xs = np.asarray(grid, dtype=float)
    h = silverman_bandwidth(errors)
    if h > 0:
        z = (xs[:, None] - errors[None, :]) / h
        dens = np.exp(-0.5 * z * z).sum(axis=1) / (errors.size * h * math.sqrt(2 * math.pi))
    else:
        dens = np.zeros_like(xs)
        k = int(np.argmin(np.abs(xs - errors[0])))
        spacing = float(np.min(np.diff(xs))) if xs.size > 1 else 1.0
        dens[k] = 1.0 / spacing
    return np.column_stack([xs, dens])


# ---------------------------------------------------------------------------
# declarative study files

_KEYS = {"dist", "distortion", "loss", "n", "reps", "seed", "estimator", "p_c"}
_KEY_ALIASES = {"censor": "p_c", "pc": "p_c", "d": "distortion"}


def parse_study_text(text: str, source: str = "<config>") -> list[StudyConfig]:
    """Expand ``key=value`` lines into study cells.

    ``|`` separates alternatives; the cells are the Cartesian product of all
    alternatives in the order the keys appear. ``#`` starts a comment.
    """
    entries: dict[str, list[str]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{source}:{line_no}: expected key=value, got {raw.strip()!r}")
        key = key.strip().lower()
        key = _KEY_ALIASES.get(key, key)
        if key not in _KEYS:
            raise ParseError(f"{source}:{line_no}: unknown key {key!r}")
        if key in entries:
            raise ParseError(f"{source}:{line_no}: key {key!r} given twice")
        options = [v.strip() for v in value.split("|")]
        if any(not v for v in options):
            raise ParseError(f"{source}:{line_no}: empty alternative for {key!r}")
        entries[key] = options
    for required in ("dist", "distortion", "loss", "n"):
        if required not in entries:
            raise ParseError(f"{source}: missing required key {required!r}")
    keys = list(entries)
    cells = []
    for combo in itertools.product(*(entries[k] for k in keys)):
        cells.append(_cell(dict(zip(keys, combo)), source))
    return cells


def _cell(values: dict[str, str], source: str) -> StudyConfig:
    try:
        p_c = float(values["p_c"]) if "p_c" in values else None
        return StudyConfig(
            dist=parse_distribution(values["dist"]),
            D=parse_distortion(values["distortion"]),
            loss=parse_loss(values["loss"]),
            n=int(values["n"]),
            reps=int(values.get("reps", 500)),
            seed=int(values.get("seed", 0)),
            estimator=values.get("estimator", "mroot"),
            censor_p=p_c,
        )
    except (ValueError, DomainError) as exc:
        raise ParseError(f"{source}: invalid cell {values}: {exc}") from exc


def load_study_file(path: str | Path) -> list[StudyConfig]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_study_text(text, str(path))
