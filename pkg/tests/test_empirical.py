import math

import numpy as np
import pytest

from gextremile.empirical import Sample, ecdf, empirical_quantile, kde, km_cdf, km_quantile, load_csv
from gextremile.errors import DomainError, ParseError


def test_ecdf():
    F = ecdf(Sample.from_values([1, 2, 3]))
    assert F(2) == 0.5
    assert F(0.5) == 0.0
    assert ecdf(Sample.from_values([1, 1, 2]))(1) == 0.5


def test_ecdf_at_order_statistics():
    x = np.random.default_rng(0).standard_normal(37)
    s = Sample.from_values(x)
    assert np.array_equal(ecdf(s)(s.values), np.arange(1, 38) / 38)


def test_empirical_quantile():
    s = Sample.from_values([10, 20, 30])
    assert empirical_quantile(s, 0.5) == 20
    assert empirical_quantile(s, 0.25) == 10
    assert empirical_quantile(s, 0.95) == 30


def test_empty_sample():
    with pytest.raises(DomainError):
        ecdf(Sample.from_values([]))


def test_kaplan_meier_hand_values():
    s = Sample.from_values([1, 2, 3], [1, 0, 1])
    F = km_cdf(s)
    assert F(1) == pytest.approx(1 / 3)
    assert F(3) == pytest.approx(1.0)
    assert km_quantile(s, 0.5) == 3

    F = km_cdf(Sample.from_values([1, 2], [0, 1]))
    assert F(2) == pytest.approx(1.0)


def test_kaplan_meier_without_censoring_is_the_step_ecdf():
    x = np.random.default_rng(1).exponential(size=25)
    F = km_cdf(Sample.from_values(x, np.ones(25)))
    xs = np.sort(x)
    assert np.allclose(F(xs), np.arange(1, 26) / 25)


def test_kaplan_meier_all_censored():
    with pytest.raises(DomainError):
        km_cdf(Sample.from_values([1, 2, 3], [0, 0, 0]))


def test_kde_positive():
    s = Sample.from_values([-2, -1, 0, 1, 2])
    assert kde(s, 0.0) > 0
    assert kde(s, 1e3) > 0


def test_kde_standard_normal_at_zero():
    s = Sample.from_values(np.random.default_rng(5).standard_normal(100_000))
    assert kde(s, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=0.05)


def test_load_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("value,event\n3,1\n1,0\n2,1\n")
    s = load_csv(p)
    assert list(s.values) == [1, 2, 3]
    assert list(s.events) == [False, True, True]

    p.write_text("value\n1\nabc\n")
    with pytest.raises(ParseError, match="row 3"):
        load_csv(p)
