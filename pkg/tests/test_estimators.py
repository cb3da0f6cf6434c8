import math

import numpy as np
import pytest

from gextremile.distortions import DistortionSpec, extremile_exponent
from gextremile.empirical import Sample
from gextremile.errors import BreakdownError, NoMinimumError, UnsupportedError
from gextremile.estimators import (
    GridConfig,
    estimate_grid,
    estimate_km,
    estimate_mroot,
    estimate_square_L,
    estimate_square_LM,
    estimate_square_M,
    fit_mroot,
    lambda_star,
)
from gextremile.losses import LossSpec, parse_loss

UNIFORM = DistortionSpec.uniform()


def J(tau, u):
    r = extremile_exponent(tau)
    return r * u ** (r - 1)


def test_square_L():
    assert estimate_square_L(Sample.from_values([1, 2, 3]), UNIFORM) == pytest.approx(1.5)
    D = DistortionSpec.extremile(0.8)
    assert estimate_square_L(Sample.from_values([2.5] * 6), D) == pytest.approx(2.5 * float(D.cdf(6 / 7)))
    # levels (k/5 - 0.5) / 0.5 clipped at zero: 0, 0, 0.2, 0.6
    assert estimate_square_L(Sample.from_values([1, 2, 3, 4]), DistortionSpec.expected_shortfall(0.5)) == pytest.approx(
        0.2 * 3 + 0.4 * 4
    )


def test_square_LM():
    assert estimate_square_LM(Sample.from_values([1, 2, 3]), UNIFORM) == pytest.approx(2.0)
    n = 7
    es = DistortionSpec.expected_shortfall(n / (n + 1))
    assert estimate_square_LM(Sample.from_values(np.arange(n) + 1.0), es) == 0.0
    assert estimate_square_LM(Sample.from_values([0, 10]), DistortionSpec.extremile(0.9)) == pytest.approx(
        0.5 * (J(0.9, 1 / 3) * 0 + J(0.9, 2 / 3) * 10), rel=1e-13
    )


def test_square_M():
    assert estimate_square_M(Sample.from_values([1, 2, 3]), UNIFORM) == pytest.approx(2.0)
    assert estimate_square_M(Sample.from_values([0.1] * 9), DistortionSpec.extremile(0.3)) == 0.1
    lm = 0.5 * J(0.9, 2 / 3) * 10
    assert estimate_square_M(Sample.from_values([0, 10]), DistortionSpec.extremile(0.9)) == pytest.approx(
        lm / ((J(0.9, 1 / 3) + J(0.9, 2 / 3)) / 2), rel=1e-13
    )


def test_square_M_breakdown():
    with pytest.raises(BreakdownError):
        estimate_square_M(Sample.from_values([1, 2, 3]), DistortionSpec.expected_shortfall(0.75))


def test_lambda_star():
    s = Sample.from_values([1, 2, 3])
    assert lambda_star(s, UNIFORM, parse_loss("quantile:0.5"), 2.0) == pytest.approx(1 / 6)
    assert lambda_star(s, UNIFORM, parse_loss("abs"), 0.5) == pytest.approx(-1.0)
    x = Sample.from_values(np.random.default_rng(2).standard_normal(50))
    D = DistortionSpec.beta(2, 2)
    assert abs(lambda_star(x, D, parse_loss("square"), estimate_square_M(x, D))) < 1e-12


def test_mroot_examples():
    assert estimate_mroot(Sample.from_values([1, 2, 3]), UNIFORM, parse_loss("quantile:0.5")) == 2.0
    assert estimate_mroot(Sample.from_values([0, 2]), UNIFORM, parse_loss("expectile:0.5")) == pytest.approx(1.0)
    assert estimate_mroot(Sample.from_values([1, 2, 3, 4]), DistortionSpec.extremile(0.5), parse_loss("abs")) == 2.0


def test_mroot_plateau_takes_left_end():
    # the uniform median of an even sample is flat between the middle order statistics
    res = fit_mroot(Sample.from_values([1, 2, 3, 4]), UNIFORM, parse_loss("quantile:0.5"))
    assert res.value == 2.0
    assert "plateau" in res.flags


def test_mroot_isolated_zero_is_not_a_plateau():
    res = fit_mroot(Sample.from_values([0, 2]), UNIFORM, parse_loss("expectile:0.5"))
    assert res.flags == ()


def test_mroot_rejects_non_convex_loss():
    with pytest.raises(UnsupportedError):
        estimate_mroot(Sample.from_values([1, 2, 3]), UNIFORM, parse_loss("trimmed:1"))


def test_grid_agrees_with_root_on_convex_loss():
    s = Sample.from_values([1, 2, 3])
    assert abs(estimate_grid(s, UNIFORM, parse_loss("quantile:0.5")) - 2.0) <= 0.01 + 1e-12


def test_grid_without_censoring_reduces_to_quantile_loss():
    x = Sample.from_values(np.random.default_rng(3).exponential(size=200))
    plain = estimate_grid(x, UNIFORM, parse_loss("quantile:0.5"))
    cens = estimate_grid(x, UNIFORM, LossSpec("cens-quantile", (0.5,)))
    assert cens == plain


def test_grid_rising_from_the_start_returns_minimum():
    x = Sample.from_values([1.0, 1.5, 2.0, 4.0])
    assert estimate_grid(x, UNIFORM, parse_loss("quantile:0.01")) == 1.0


def test_grid_no_minimum():
    # past the maximum the summed objective rises at 2 * (1 - 0.999), below the threshold
    with pytest.raises(NoMinimumError):
        estimate_grid(Sample.from_values([0.0, 1.0]), UNIFORM, parse_loss("quantile:0.999"), GridConfig())


def test_km_estimator():
    s = Sample.from_values([1, 2, 3], [1, 0, 1])
    assert estimate_km(s, 0.5) == 3


def test_expectile_root_solves_equation():
    x = Sample.from_values(np.random.default_rng(4).standard_normal(300))
    D = DistortionSpec.extremile(0.8)
    loss = parse_loss("expectile:0.9")
    c = estimate_mroot(x, D, loss)
    assert abs(lambda_star(x, D, loss, c)) < 1e-12
    assert math.isfinite(c)
