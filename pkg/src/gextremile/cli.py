"""Command-line front end.

    gextremile estimate data.csv --distortion extremile:0.9 --loss expectile:0.5
    gextremile curve data.csv --distortion es --loss square --tau-from 0.5 --tau-to 0.99 --tau-steps 50
    gextremile variance --distortion uniform --loss quantile:0.5 --dist expo:1
    gextremile simulate configs/st1.cfg

Exit codes: 0 ok, 2 bad input, 3 estimator breakdown, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np

from .distortions import DistortionSpec, parse_distortion, parse_distribution
from .empirical import Sample, load_csv
from .errors import (
    BreakdownError,
    DegenerateSlopeError,
    DivergenceError,
    DomainError,
    NoMinimumError,
    ParseError,
    UnsupportedError,
)
from .estimators import (
    estimate_grid,
    estimate_km,
    estimate_square_L,
    estimate_square_LM,
    estimate_square_M,
    fit_mroot,
)
from .inference import (
    CLOSED_FORM_CASES,
    EstimateResult,
    avar_closed,
    avar_general,
    avar_square,
    confidence_interval,
    plugin_variance,
    population_value,
)
from .losses import LossSpec, classify, parse_loss
from .montecarlo import ESTIMATORS, censoring_for_proportion, load_study_file, run_study

EXIT_OK, EXIT_PARSE, EXIT_BREAKDOWN, EXIT_NUMERIC = 0, 2, 3, 4

_NUMERIC_ERRORS = (DivergenceError, NoMinimumError, DegenerateSlopeError, UnsupportedError, ArithmeticError)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.12g}"


# ---------------------------------------------------------------------------
# token helpers


def _with_param(token: str, value: float | None) -> str:
    """Append ``value`` to a bare family token such as ``extremile`` or ``quantile``."""
    if value is None or ":" in token:
        return token
    return f"{token}:{value!r}"


def _distortion(token: str, tau: float | None = None) -> DistortionSpec:
    return parse_distortion(_with_param(token, tau))


def _loss(token: str, delta: float | None = None) -> LossSpec:
    return parse_loss(_with_param(token, delta))


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class _Fit:
    point: float
    method: str
    flags: tuple[str, ...]


def _default_estimator(loss: LossSpec) -> str:
    if loss.kind == "square":
        return "M"
    return "mroot" if classify(loss).convex else "grid"


def _fit(sample: Sample, D: DistortionSpec, loss: LossSpec, estimator: str) -> _Fit:
    if estimator == "auto":
        estimator = _default_estimator(loss)
    if estimator in ("L", "LM", "M") and loss.kind != "square":
        raise CliError(f"estimator {estimator} applies to the square loss only", EXIT_PARSE)
    if estimator == "L":
        return _Fit(estimate_square_L(sample, D), "L", ())
    if estimator == "LM":
        return _Fit(estimate_square_LM(sample, D), "LM", ())
    if estimator == "M":
        return _Fit(estimate_square_M(sample, D), "M", ())
    if estimator == "mroot":
        res = fit_mroot(sample, D, loss)
        return _Fit(res.value, "mroot", res.flags)
    if estimator == "grid":
        return _Fit(estimate_grid(sample, D, loss), "grid", ())
    if loss.kind not in ("quantile", "cens-quantile"):
        raise CliError("the km estimator needs a quantile loss", EXIT_PARSE)
    return _Fit(estimate_km(sample, loss.params[0]), "km", ())


def _variance(sample: Sample, D: DistortionSpec, loss: LossSpec, point: float, method: str, dist_token: str | None):
    """Per-observation variance and a tag naming how it was obtained."""
    if method == "none":
        return None, "none"
    if method == "asymptotic" or (method == "auto" and dist_token):
        if not dist_token:
            raise CliError("--variance-method asymptotic needs --dist", EXIT_PARSE)
        dist = parse_distribution(dist_token)
        if loss.kind == "square":
            return avar_square(D, dist), "asymptotic"
        return avar_general(D, dist, loss, point), "asymptotic"
    try:
        return plugin_variance(sample, D, loss, point), "plugin"
    except (UnsupportedError, DomainError):
        if method == "plugin":
            raise
        return None, "none"


def estimate_result(
    sample: Sample,
    D: DistortionSpec,
    loss: LossSpec,
    *,
    estimator: str = "auto",
    variance_method: str = "auto",
    ci_level: float = 0.95,
    dist_token: str | None = None,
) -> EstimateResult:
    fit = _fit(sample, D, loss, estimator)
    var, var_tag = _variance(sample, D, loss, fit.point, variance_method, dist_token)
    low = high = None
    if var is not None:
        low, high = confidence_interval(fit.point, var, sample.n, ci_level)
    method = fit.method if var_tag == "none" else f"{fit.method}+{var_tag}"
    return EstimateResult(fit.point, var, low, high, method, fit.flags, sample.n)


def result_json(res: EstimateResult) -> dict:
    ci = None if res.ci_low is None else [res.ci_low, res.ci_high]
    return {
        "point": res.point,
        "var": res.variance_asym,
        "ci": ci,
        "n": res.n,
        "method": res.method,
        "flags": list(res.flags),
    }


# ---------------------------------------------------------------------------
# commands


@contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as handle:
            yield handle


def cmd_estimate(args) -> int:
    sample = load_csv(args.csv)
    D = _distortion(args.distortion, args.tau)
    loss = _loss(args.loss, args.delta)
    try:
        res = estimate_result(
            sample,
            D,
            loss,
            estimator=args.estimator,
            variance_method=args.variance_method,
            ci_level=args.ci_level,
            dist_token=args.dist,
        )
    except BreakdownError as exc:
        raise CliError(f"breakdown: {exc}", EXIT_BREAKDOWN) from exc
    with _output(args.out) as out:
        json.dump(result_json(res), out)
        out.write("\n")
    return EXIT_OK


def breakdown_tau(family: str, n: int) -> float | None:
    """``n / (n + 1)`` for expected-shortfall families, whose weights all vanish from there on."""
    return n / (n + 1) if family in ("es", "expected-shortfall") else None


def cmd_curve(args) -> int:
    sample = load_csv(args.csv)
    loss = _loss(args.loss, args.delta)
    if args.tau_steps < 1:
        raise CliError("--tau-steps must be at least 1", EXIT_PARSE)
    taus = np.linspace(args.tau_from, args.tau_to, args.tau_steps)
    # validate the family once up front so a bad token is a parse error, not a row error
    _distortion(args.distortion, float(taus[0]))
    cut = breakdown_tau(args.distortion, sample.n)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["tau", "point", "ci_low", "ci_high", "flag"])
    points = []
    for tau in taus:
        tau = float(tau)
        flag = ""
        point = low = high = None
        if cut is not None and tau >= cut:
            flag = "breakdown"
        else:
            try:
                res = estimate_result(
                    sample,
                    _distortion(args.distortion, tau),
                    loss,
                    estimator=args.estimator,
                    variance_method=args.variance_method,
                    ci_level=args.ci_level,
                    dist_token=args.dist,
                )
                point, low, high = res.point, res.ci_low, res.ci_high
                flag = ";".join(res.flags)
            except BreakdownError:
                flag = "breakdown"
            except (ParseError, ValueError) as exc:
                flag = f"error: {exc}"
            except _NUMERIC_ERRORS as exc:
                flag = f"error: {exc}"
        if point is not None:
            points.append(point)
        writer.writerow([_fmt(tau), _fmt(point), _fmt(low), _fmt(high), flag])
    with _output(args.out) as out:
        out.write(buffer.getvalue())
    decreases = int(np.sum(np.diff(points) < 0)) if len(points) > 1 else 0
    print(f"adjacent decreases along the curve: {decreases}", file=sys.stderr)
    return EXIT_OK


def cmd_variance(args) -> int:
    dist = parse_distribution(args.dist)
    loss = _loss(args.loss, args.delta)
    D = _distortion(args.distortion, args.tau)
    payload: dict = {}
    if args.case:
        delta = loss.params[0] if loss.params else args.delta
        censor = censoring_for_proportion(args.censor_p) if args.censor_p else None
        value = avar_closed(args.case, D=D, dist=dist, delta=delta, censor=censor)
        payload = {"var": value, "method": f"closed:{args.case}"}
    elif loss.kind == "square":
        payload = {"var": avar_square(D, dist), "t0": population_value(D, dist, loss), "method": "square"}
    else:
        t0 = population_value(D, dist, loss)
        payload = {"var": avar_general(D, dist, loss, t0), "t0": t0, "method": "general"}
    with _output(args.out) as out:
        json.dump(payload, out)
        out.write("\n")
    return EXIT_OK


_SIM_COLUMNS = [
    "dist",
    "distortion",
    "loss",
    "n",
    "reps",
    "seed",
    "estimator",
    "p_c",
    "t0",
    "bias",
    "variance",
    "mse",
    "failures",
    "error",
]


def cmd_simulate(args) -> int:
    cells = load_study_file(args.config)
    if args.seed is not None:
        cells = [replace(c, seed=args.seed) for c in cells]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_SIM_COLUMNS)
    failed = 0
    for cfg in cells:
        head = [
            cfg.dist.token,
            cfg.D.token,
            cfg.loss.token,
            cfg.n,
            cfg.reps,
            cfg.seed,
            cfg.estimator,
            "" if cfg.censor_p is None else _fmt(cfg.censor_p),
        ]
        try:
            rep = run_study(cfg)
        except (ValueError, *_NUMERIC_ERRORS) as exc:
            failed += 1
            writer.writerow(head + ["", "", "", "", "", str(exc)])
            continue
        writer.writerow(head + [_fmt(rep.t0), _fmt(rep.bias), _fmt(rep.variance), _fmt(rep.mse), rep.failures, ""])
    with _output(args.out) as out:
        out.write(buffer.getvalue())
    if cells and failed == len(cells):
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _level(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gextremile", description="Estimate and simulate generalized extremiles.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data: bool = True):
        if data:
            p.add_argument("csv", help="CSV file with header 'value' or 'value,event'")
        p.add_argument("--distortion", default="uniform", help="distortion token, e.g. extremile:0.9 or es")
        p.add_argument("--loss", default="square", help="loss token, e.g. quantile:0.5")
        p.add_argument("--tau", type=float, help="parameter appended to a bare distortion family")
        p.add_argument("--delta", type=float, help="parameter appended to a bare loss family")
        p.add_argument("--out", help="write output here instead of stdout")

    def fitting(p):
        p.add_argument("--ci-level", type=_level, default=0.95)
        p.add_argument("--estimator", choices=("auto", *ESTIMATORS), default="auto")
        p.add_argument("--variance-method", choices=("auto", "plugin", "asymptotic", "none"), default="auto")
        p.add_argument("--dist", help="parametric distribution for asymptotic variances, e.g. normal:0:1")

    p = sub.add_parser("estimate", help="point estimate with variance and confidence interval (JSON)")
    common(p)
    fitting(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("curve", help="estimates over a grid of tau (CSV)")
    common(p)
    fitting(p)
    p.add_argument("--tau-from", type=float, default=0.5)
    p.add_argument("--tau-to", type=float, default=0.99)
    p.add_argument("--tau-steps", type=int, default=50)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("variance", help="asymptotic variance for a parametric distribution (JSON)")
    common(p, data=False)
    p.add_argument("--dist", required=True, help="distribution token, e.g. expo:1")
    p.add_argument("--case", choices=CLOSED_FORM_CASES, help="use a closed-form expression")
    p.add_argument("--censor-p", type=float, help="censoring proportion for the censored cases")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("simulate", help="run Monte Carlo study cells from a config file (CSV)")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override the seed of every cell")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except BreakdownError as exc:
        print(f"breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
