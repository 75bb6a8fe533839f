import math

import numpy as np
import pytest
from scipy import stats

from npsdist import DomainError, SeriesTruncationError, get_family, pmf, sample_n
from npsdist.power_series import max_series_terms, pmf_table


def test_pmf_examples():
    assert pmf(get_family("ng"), 0.5, 1) == pytest.approx(0.5, abs=1e-15)
    assert pmf(get_family("np"), 1.0, 1) == pytest.approx(1 / (math.e - 1), rel=1e-14)
    n = np.arange(2, 201)
    assert abs(pmf(get_family("nnb:2"), 0.5, n).sum() - 1) < 1e-12


def test_pmf_zero_outside_support():
    assert pmf(get_family("nb:3"), 1.0, 4) == 0.0
    assert pmf(get_family("nnb:3"), 0.5, 2) == 0.0
    assert pmf(get_family("ng"), 0.5, 0) == 0.0


def test_pmf_requires_proper_domain():
    with pytest.raises(DomainError):
        pmf(get_family("ng"), -0.5, 1)


def test_series_values():
    g = get_family("ng")
    assert (g.C(0.5), g.dC(0.5), g.d2C(0.5), g.d3C(0.5)) == pytest.approx((1, 4, 16, 96), rel=1e-14)
    p = get_family("np")
    assert p.C(1.0) == pytest.approx(math.e - 1)
    for d in (p.dC, p.d2C, p.d3C):
        assert d(1.0) == pytest.approx(math.e)


@pytest.mark.parametrize("spec,theta", [("nnb:2", 0.3), ("nl", 0.6), ("nb:4", 0.7), ("np", -2.0), ("ng", -3.0)])
def test_derivatives_vs_finite_differences(spec, theta):
    f = get_family(spec)
    h = 1e-6
    for lower, upper in ((f.C, f.dC), (f.dC, f.d2C), (f.d2C, f.d3C)):
        fd = (lower(theta + h) - lower(theta - h)) / (2 * h)
        assert upper(theta) == pytest.approx(fd, rel=1e-7)


def test_inverse_examples():
    assert get_family("ng").Cinv(1.0) == pytest.approx(0.5)
    assert get_family("np").Cinv(math.e - 1) == pytest.approx(1.0)
    assert get_family("ng").Cinv(-0.5) == pytest.approx(-1.0)


@pytest.mark.parametrize("spec", ["ng", "np", "nl", "nb:3", "nnb:2"])
def test_inverse_roundtrip(spec):
    f = get_family(spec)
    iv = f.proper_domain
    hi = iv.hi if math.isfinite(iv.hi) else 5.0
    for th in np.linspace(iv.lo, hi, 7)[1:-1]:
        assert f.Cinv(f.C(th)) == pytest.approx(th, rel=1e-10)


def test_truncation_index():
    assert get_family("ng").truncation_index == 1
    assert get_family("nnb:3").truncation_index == 3


@pytest.mark.parametrize("bad", ["zeta", "nb", "nb:x", "ng:2", "nnb:0"])
def test_bad_specs(bad):
    with pytest.raises(ValueError):
        get_family(bad)


def test_aliases():
    assert get_family("geometric").spec == get_family("ng").spec
    assert get_family("NP").spec == get_family("poisson").spec


def test_sample_mean_geometric(rng):
    f = get_family("ng")
    draws = sample_n(f, 0.5, rng, size=100_000)
    assert abs(draws.mean() - f.mean_n(0.5)) < 3 * draws.std() / math.sqrt(draws.size)
    assert f.mean_n(0.5) == pytest.approx(2.0)


def test_sample_binomial_support(rng):
    draws = sample_n(get_family("nb:3"), 1.0, rng, size=10_000)
    assert set(np.unique(draws)) <= {1, 2, 3}


def test_sample_poisson_chisquare(rng):
    f = get_family("np")
    draws = sample_n(f, 3.0, rng, size=100_000)
    n, p = pmf_table(f, 3.0)
    keep = n <= 9
    observed = np.array([np.sum(draws == k) for k in n[keep]] + [np.sum(draws > 9)])
    expected = np.append(p[keep], 1 - p[keep].sum()) * draws.size
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_pmf_table_mass():
    for spec, th in [("ng", 0.9), ("np", 10.0), ("nl", 0.95)]:
        n, p = pmf_table(get_family(spec), th, tol=1e-12)
        assert 1 - p.sum() < 1e-12


def test_series_cap(monkeypatch):
    monkeypatch.setenv("NPS_MAX_SERIES", "50")
    assert max_series_terms() == 50
    with pytest.raises(SeriesTruncationError):
        pmf_table(get_family("ng"), 0.999)
