import json
import math

import numpy as np
import pytest

from npsdist import NpsModel
from npsdist.inference import (
    FitConfig,
    FitResult,
    Psi,
    compare,
    fit_direct,
    fit_normal,
    info_report,
    loglik,
    observed_info,
    score,
)
from npsdist.oracle import fd_grad

SCORE_FAMILIES = [("ng", (0.05, 0.95)), ("np", (0.1, 5.0)), ("nl", (0.05, 0.95)), ("nb:3", (0.1, 4.0)),
                  ("nnb:2", (0.05, 0.9)), ("ng", (-6.0, -0.1)), ("np", (-4.0, -0.1))]


def _random_instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for i in range(count):
        spec, (lo, hi) = SCORE_FAMILIES[i % len(SCORE_FAMILIES)]
        psi = Psi(rng.normal(0, 2), rng.uniform(0.5, 3), rng.uniform(lo, hi))
        model = NpsModel(spec, psi.mu, psi.sigma, psi.theta)
        yield spec, psi, model.sample(rng, int(rng.integers(20, 80)))


def test_loglik_single_datum():
    m = NpsModel("ng", 1.0, 2.0, 0.7)
    assert loglik("ng", Psi(1.0, 2.0, 0.7), [1.0]) == pytest.approx(m.logpdf(1.0), abs=1e-15)


def test_loglik_matches_mixture():
    m = NpsModel("np", 0.5, 1.5, 2.0)
    y = m.sample(np.random.default_rng(9), 50)
    assert loglik("np", Psi(0.5, 1.5, 2.0), y) == pytest.approx(np.log(m.mixture_pdf(y, tol=1e-14)).sum(), abs=1e-8)


def test_loglik_outside_domain():
    assert loglik("ng", Psi(0, 1, 1.5), [0.0, 1.0]) == -np.inf


def test_score_vs_finite_differences():
    worst = 0.0
    for spec, psi, y in _random_instances(105):
        f = lambda v: loglik(spec, Psi(*v), y)
        x = psi.as_array()
        fd = fd_grad(f, x, h=1e-5 * np.maximum(1.0, np.abs(x)))
        an = score(spec, psi, y)
        scale = np.maximum(np.abs(fd), 1e-3 * y.size)
        worst = max(worst, float(np.max(np.abs(an - fd) / scale)))
    assert worst < 1e-5


def test_score_symmetric_data_limit():
    y = np.array([-2.0, -1.0, -0.3, 0.3, 1.0, 2.0]) + 4.0
    s = score("ng", Psi(4.0, 1.5, 1e-9), y)
    assert abs(s[0]) < 1e-8


def _ng_sample(n=500, seed=21, theta=0.5):
    return NpsModel("ng", 0, 1, theta).sample(np.random.default_rng(seed), n)


def test_observed_info_vs_fd():
    y = _ng_sample()
    fit = fit_direct("ng", y)
    rep = info_report("ng", fit.psi_hat, y)
    assert rep.gap_analytic < 1e-3
    assert rep.authoritative == "analytic"
    for psi in (Psi(0.1, 1.1, 0.4), Psi(-0.3, 0.8, 0.8)):
        assert info_report("ng", psi, y).gap_analytic < 1e-3


def test_printed_information_discrepancy_reported():
    y = NpsModel("np", 0, 2, 1.0).sample(np.random.default_rng(1), 300)
    rep = info_report("np", Psi(0.0, 2.0, 1.0), y)
    assert rep.gap_analytic < 1e-3
    assert rep.gap_printed > 1e-2
    assert any("status=ok" in line for line in rep.lines())


def test_observed_info_normal_limit():
    y = _ng_sample(200)
    info = observed_info("ng", Psi(0.0, 1.3, 1e-9), y)
    assert info[0, 0] == pytest.approx(y.size / 1.3**2, rel=1e-6)


def test_observed_info_forms():
    y = _ng_sample(100)
    psi = Psi(0.0, 1.0, 0.5)
    assert np.allclose(observed_info("ng", psi, y, "auto"), observed_info("ng", psi, y), rtol=1e-12)
    with pytest.raises(ValueError):
        observed_info("ng", psi, y, "bogus")


def test_direct_fit_certificate():
    y = _ng_sample()
    fit = fit_direct("ng", y)
    assert fit.converged and not fit.boundary
    assert np.max(np.abs(score("ng", fit.psi_hat, y))) < 1e-6 * y.size
    assert np.min(np.linalg.eigvalsh(observed_info("ng", fit.psi_hat, y))) > 0
    cov = np.asarray(fit.cov)
    assert np.allclose(cov, cov.T)
    assert fit.aic == pytest.approx(6 - 2 * fit.loglik)
    assert fit.bic == pytest.approx(3 * math.log(y.size) - 2 * fit.loglik)


def test_direct_fit_equivariance():
    y = NpsModel("np", 0, 1, 1.5).sample(np.random.default_rng(4), 400)
    a, b = 7.0, 3.0
    base = fit_direct("np", y)
    moved = fit_direct("np", a + b * y)
    assert moved.psi_hat.mu == pytest.approx(a + b * base.psi_hat.mu, abs=1e-6 * b)
    assert moved.psi_hat.sigma == pytest.approx(b * base.psi_hat.sigma, abs=1e-6 * b)
    assert moved.psi_hat.theta == pytest.approx(base.psi_hat.theta, abs=1e-6)
    assert moved.loglik == pytest.approx(base.loglik - y.size * math.log(b), abs=1e-6)


def test_direct_fit_recovers_truth():
    est = []
    for seed in range(20):
        y = NpsModel("ng", 0, 1, 0.5).sample(np.random.default_rng(100 + seed), 2000)
        est.append(fit_direct("ng", y).psi_hat.as_array())
    assert np.allclose(np.mean(est, axis=0), [0, 1, 0.5], atol=0.1)


def test_extended_fit():
    y = NpsModel("ng", 0, 1, -4.0).sample(np.random.default_rng(8), 1500)
    proper = fit_direct("ng", y)
    ext = fit_direct("ng", y, FitConfig(extended=True))
    assert ext.loglik >= proper.loglik - 1e-9
    assert ext.psi_hat.theta < 0


def test_fit_rejects_tiny_samples():
    with pytest.raises(ValueError):
        fit_direct("ng", [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        fit_direct("ng", [0.1, np.nan] * 10)


def test_fit_result_json_roundtrip():
    fit = fit_direct("ng", _ng_sample(150))
    text = fit.to_json(sort_keys=True)
    again = FitResult.from_dict(json.loads(text))
    assert again.to_json(sort_keys=True) == text
    lo, hi = fit.confidence_intervals()[0]
    assert lo < fit.psi_hat.mu < hi


def test_normal_baseline():
    y = np.random.default_rng(0).normal(3, 2, 400)
    fit = fit_normal(y)
    var = np.var(y)
    assert fit.loglik == pytest.approx(-0.5 * y.size * (math.log(2 * math.pi * var) + 1))
    assert fit.k == 2 and math.isnan(fit.psi_hat.theta)


def test_compare_normal_data():
    y = np.random.default_rng(5).normal(0, 1, 500)
    rows = compare(y, ["ng", "np", "nl", "normal"])
    best = rows[0].fit.aic
    normal = next(r for r in rows if r.family == "normal")
    assert normal.fit.aic - best < 2
    assert [r.fit.aic for r in rows] == sorted(r.fit.aic for r in rows)


def test_compare_single_family():
    y = _ng_sample(200)
    rows = compare(y, ["ng"])
    assert len(rows) == 1
    assert rows[0].fit.to_dict() == fit_direct("ng", y).to_dict()


def test_compare_bad_family():
    with pytest.raises(ValueError):
        compare(_ng_sample(50), ["ng", "zeta"])


def test_ais_table(ais_heights):
    rows = compare(ais_heights, ["ng", "np", "nl", "normal"])
    assert rows[0].family == "geometric"
    ng = rows[0].fit
    assert -ng.loglik == pytest.approx(348.376, abs=0.05)
    assert ng.aic == pytest.approx(702.752, abs=0.5)
