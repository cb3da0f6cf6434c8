"""Invariants checked on generated inputs."""

import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate

from gextremile.distortions import DistortionSpec
from gextremile.empirical import Sample, ecdf, empirical_quantile, km_cdf
from gextremile.estimators import (
    estimate_mroot,
    estimate_square_LM,
    estimate_square_M,
    fit_mroot,
    lambda_star,
)
from gextremile.inference import confidence_interval
from gextremile.losses import parse_loss

unit = st.floats(0.02, 0.98)
shape = st.floats(0.3, 6.0)

distortions = st.one_of(
    st.just(DistortionSpec.uniform()),
    unit.map(DistortionSpec.extremile),
    st.floats(0.0, 0.95).map(DistortionSpec.expected_shortfall),
    st.tuples(shape, shape).map(lambda ab: DistortionSpec.beta(*ab)),
    st.floats(-2.0, 2.0).map(lambda t: DistortionSpec("wang", (t,))),
    st.floats(1.0, 5.0).map(lambda t: DistortionSpec("ph", (t,))),
    st.floats(0.0, 3.0).map(lambda t: DistortionSpec("minvar", (t,))),
)

samples = st.lists(
    st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False), min_size=1, max_size=60
).map(Sample.from_values)

convex_losses = st.one_of(
    st.just(parse_loss("abs")),
    st.just(parse_loss("square")),
    unit.map(lambda d: parse_loss(f"quantile:{d}")),
    unit.map(lambda d: parse_loss(f"expectile:{d}")),
    st.floats(0.1, 3.0).map(lambda k: parse_loss(f"huber:{k}")),
)


@given(distortions, st.lists(unit, min_size=2, max_size=20))
def test_distortion_cdf_is_nondecreasing(D, us):
    us = np.sort(us)
    values = D.cdf(us)
    assert np.all(np.diff(values) >= -1e-15)
    assert float(D.cdf(0.0)) == 0.0 and float(D.cdf(1.0)) == 1.0


@given(distortions)
def test_dual_is_an_involution(D):
    assert D.dual().dual() == D


@given(distortions, unit, unit)
def test_density_integrates_to_cdf_increment(D, a, b):
    a, b = min(a, b), max(a, b)
    assume(b - a > 1e-3)
    breaks = [p for p in D.breaks() if a < p < b]
    got = integrate.quad(lambda u: float(D.density(u)), a, b, points=breaks or None, limit=200)[0]
    assert math.isclose(got, float(D.cdf(b) - D.cdf(a)), rel_tol=1e-6, abs_tol=1e-9)


@given(samples)
def test_ecdf_at_order_statistics(sample):
    assume(len(set(sample.values)) == sample.n)
    F = ecdf(sample)
    assert np.array_equal(F(sample.values), np.arange(1, sample.n + 1) / (sample.n + 1))


@given(samples, unit)
def test_empirical_quantile_defining_inequalities(sample, p):
    q = empirical_quantile(sample, p)
    count = int(np.sum(sample.values <= q))
    assert count / (sample.n + 1) >= p or count == sample.n


@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=40))
def test_kaplan_meier_without_censoring_jumps_by_one_over_n(values):
    s = Sample.from_values(values, np.ones(len(values)))
    F = km_cdf(s)
    xs = np.unique(s.values)
    counts = np.array([np.sum(s.values <= x) for x in xs])
    assert np.allclose(F(xs), counts / s.n)


@given(samples, distortions, convex_losses, st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_lambda_star_is_nondecreasing(sample, D, loss, c1, c2):
    lo, hi = min(c1, c2), max(c1, c2)
    assert lambda_star(sample, D, loss, lo) <= lambda_star(sample, D, loss, hi) + 1e-9 * max(1.0, abs(hi))


@settings(deadline=None)
@given(samples, distortions, convex_losses)
def test_mroot_returns_the_infimum(sample, D, loss):
    res = fit_mroot(sample, D, loss)
    assume("no_sign_change" not in res.flags)
    c = res.value
    scale = max(1.0, abs(c))
    assert lambda_star(sample, D, loss, c) >= -1e-9 * scale
    assert lambda_star(sample, D, loss, c - 1e-6 * scale) < 1e-9 * scale


@given(samples, distortions, unit, st.floats(0.01, 100.0), st.floats(-100.0, 100.0))
def test_quantile_root_is_affine_equivariant(sample, D, delta, a, b):
    loss = parse_loss(f"quantile:{delta}")
    assume("no_sign_change" not in fit_mroot(sample, D, loss).flags)
    assert estimate_mroot(sample.affine(a, b), D, loss) == a * estimate_mroot(sample, D, loss) + b


@given(st.floats(-1e6, 1e6), st.integers(1, 50), distortions)
def test_weighted_mean_of_constant_sample(c, n, D):
    s = Sample.from_values([c] * n)
    w_total = float(np.sum(D.density(np.arange(1, n + 1) / (n + 1))))
    assume(w_total > 0)
    assert estimate_square_M(s, D) == c


@given(samples)
def test_es_breakdown_is_exactly_zero(sample):
    n = sample.n
    assert estimate_square_LM(sample, DistortionSpec.expected_shortfall(n / (n + 1))) == 0.0


@given(st.floats(-1e3, 1e3), st.floats(0.0, 1e3), st.integers(1, 10_000), unit)
def test_confidence_interval_is_symmetric(point, var, n, level):
    lo, hi = confidence_interval(point, var, n, level)
    assert lo <= point <= hi
    assert math.isclose(point - lo, hi - point, rel_tol=1e-12, abs_tol=1e-12)
