import math

import numpy as np
import pytest

from npsdist import DomainError, NpsModel
from npsdist.moments import (
    MomentSummary,
    OrthantSpec,
    approx_moments,
    approx_moments_printed,
    mean_series,
    mgf_series,
    moments_quantile_integral,
    moments_series,
    orthant_prob,
    raw_moment_quantile_integral,
    second_moment_series,
    second_moment_series_printed,
)
from npsdist.oracle import integrate_pdf, mc_moments

from conftest import PROPER_CASES


def test_orthant_trivial():
    assert orthant_prob(OrthantSpec(0, 0.5)) == 1.0
    assert orthant_prob(OrthantSpec(1, 0.5)) == pytest.approx(0.5, abs=1e-14)


def test_orthant_trivariate_closed_form():
    # corr(X_i, X_j) = c/(1+c); trivariate orthant is 1/8 + 3 asin(rho)/(4 pi)
    rho = 0.5 / 1.5
    exact = 0.125 + 3 * math.asin(rho) / (4 * math.pi)
    assert orthant_prob(OrthantSpec(3, 0.5)) == pytest.approx(exact, abs=1e-12)


def test_orthant_monte_carlo():
    rng = np.random.default_rng(11)
    hits, total = 0, 0
    for _ in range(10):
        z = rng.standard_normal((1_000_000, 1))
        x = math.sqrt(0.5) * z + rng.standard_normal((1_000_000, 3))
        hits += np.count_nonzero(np.all(x <= 0, axis=1))
        total += 1_000_000
    p_hat = hits / total
    se = math.sqrt(p_hat * (1 - p_hat) / total)
    assert abs(orthant_prob(OrthantSpec(3, 0.5)) - p_hat) < 3 * se


def test_orthant_vector_shift_matches_scalar():
    a = orthant_prob(OrthantSpec(4, 0.7, 0.3))
    b = orthant_prob(OrthantSpec(4, 0.7, (0.3, 0.3, 0.3, 0.3)))
    assert a == pytest.approx(b, abs=1e-13)


def test_orthant_independent_case():
    from scipy.stats import norm

    assert orthant_prob(OrthantSpec(5, 0.0, 0.4)) == pytest.approx(norm.cdf(0.4) ** 5, rel=1e-14)


@pytest.mark.parametrize("bad", [dict(dim=-1, offdiag=0.5), dict(dim=2, offdiag=-0.2), dict(dim=2, offdiag=0.5, shift=(0.0,))])
def test_orthant_errors(bad):
    with pytest.raises(DomainError):
        OrthantSpec(**bad)


def test_table_anchors():
    ng = moments_quantile_integral(NpsModel("ng", 0, 1, 0.5))
    assert (ng.m1, ng.variance, ng.skewness, ng.kurtosis) == pytest.approx((0.3894, 0.9799, -0.1942, 3.0846), abs=5e-4)
    np_ = moments_quantile_integral(NpsModel("np", 0, 1, 1.0))
    assert (np_.m1, np_.variance, np_.skewness, np_.kurtosis) == pytest.approx((0.2781, 0.9677, -0.1349, 3.0792), abs=5e-4)


def test_limit_moments():
    s = moments_quantile_integral(NpsModel("ng", 0, 1, 0.0))
    assert (s.m1, s.variance, s.skewness, s.kurtosis) == pytest.approx((0, 1, 0, 3), abs=1e-9)


@pytest.mark.parametrize("spec,theta", PROPER_CASES)
def test_quantile_integral_vs_quadrature(spec, theta):
    m = NpsModel(spec, 0.5, 1.5, theta)
    for k in (1, 2, 3, 4):
        qi, _ = raw_moment_quantile_integral(m, k)
        assert qi == pytest.approx(integrate_pdf(m, k).value, rel=1e-8, abs=1e-9)


def test_oracle_anchors():
    assert integrate_pdf(NpsModel("ng", 0, 1, 0.5), 1).value == pytest.approx(0.3894, abs=1e-4)
    assert integrate_pdf(NpsModel("np", 0, 1, 1.0), 2).value == pytest.approx(0.9677 + 0.2781**2, abs=1e-4)


@pytest.mark.parametrize("spec,theta", PROPER_CASES)
def test_series_vs_quantile_integral(spec, theta):
    m = NpsModel(spec, 0.2, 1.3, theta)
    qi = moments_quantile_integral(m)
    assert abs(mean_series(m) - qi.m1) < 1e-8
    assert abs(second_moment_series(m) - qi.m2) < 1e-8


def test_series_examples():
    m = NpsModel("ng", 0, 1, 0.5)
    assert mean_series(m) == pytest.approx(0.3894, abs=1e-3)
    assert mgf_series(m, 0.0) == pytest.approx(1.0, abs=1e-10)
    p = NpsModel("np", 0, 1, 3.0)
    assert abs(mean_series(p) - moments_quantile_integral(p).m1) < 1e-6


@pytest.mark.parametrize("t", [-1.0, 0.3, 0.8])
def test_mgf_vs_quadrature(t):
    from scipy import integrate

    m = NpsModel("np", 0.5, 1.2, 2.0)
    val, _ = integrate.quad(lambda y: math.exp(t * y) * m.pdf(y), -30, 30, points=[0.5], limit=200)
    assert mgf_series(m, t) == pytest.approx(val, rel=1e-9)


def test_series_summary_matches():
    m = NpsModel("nl", 0, 1, 0.7)
    a, b = moments_series(m), moments_quantile_integral(m)
    assert a.m1 == pytest.approx(b.m1, abs=1e-8)
    assert a.variance == pytest.approx(b.variance, abs=1e-8)


def test_series_needs_proper():
    with pytest.raises(DomainError):
        mean_series(NpsModel("ng", 0, 1, -0.5))


def test_printed_second_moment_weights_differ():
    m = NpsModel("ng", 0, 1, 0.5)
    assert abs(second_moment_series_printed(m) - moments_quantile_integral(m).m2) > 1e-3


def test_approximation_bounds():
    assert approx_moments(NpsModel("ng", 0, 1, 0.0)).m1 == pytest.approx(0.0, abs=1e-15)
    assert abs(approx_moments(NpsModel("ng", 0, 1, 0.5)).m1 - 0.3894) < 0.15
    assert abs(approx_moments(NpsModel("np", 0, 1, 1.0)).m1 - 0.2781) < 0.15


@pytest.mark.parametrize("spec,theta", [("ng", 0.3), ("ng", -2.0), ("np", 1.5), ("nb:3", 0.8)])
def test_approximation_vs_uniform_mc(spec, theta):
    # the approximations are exact moments of a + b T, T = Phi(Z)
    m = NpsModel(spec, 0.4, 1.7, theta)
    t = m.with_params(mu=0.0, sigma=1.0).sample(np.random.default_rng(5), 400_000)
    from scipy.stats import norm

    a, b = 0.4 - 1.7 * math.sqrt(2 * math.pi) / 2, 1.7 * math.sqrt(2 * math.pi)
    lin = a + b * norm.cdf(t)
    got = approx_moments(m)
    se = lin.std() / math.sqrt(lin.size)
    assert abs(got.m1 - lin.mean()) < 4 * se


def test_printed_approximations():
    # the printed geometric mean and Poisson second moment agree with the linearisation
    for spec, th, idx in [("ng", 0.5, 0), ("np", 1.0, 1), ("nb:3", 0.5, 0)]:
        m = NpsModel(spec, 0.3, 1.0, th)
        lin = approx_moments(m)
        printed = approx_moments_printed(m)
        assert printed[idx] == pytest.approx((lin.m1, lin.m2)[idx], rel=1e-10)
    with pytest.raises(DomainError):
        approx_moments_printed(NpsModel("ng", 0, 1, 0.0))


def test_approximation_unsupported_family():
    with pytest.raises(ValueError):
        approx_moments(NpsModel("nl", 0, 1, 0.5))


def test_summary_from_raw():
    s = MomentSummary.from_raw([0.0, 1.0, 0.0, 3.0], "series")
    assert (s.variance, s.skewness, s.kurtosis) == (1.0, 0.0, 3.0)
    assert set(s.as_dict()) >= {"m1", "variance", "method"}


def test_monte_carlo_agreement():
    m = NpsModel("ng", 0, 1, 0.5)
    reports = mc_moments(m, n_draws=200_000, seed=3)
    qi = moments_quantile_integral(m)
    for rep, exact in zip(reports, (qi.m1, qi.m2)):
        assert abs(rep.value - exact) < 4 * rep.error_estimate
