"""
Brute-force reference computations.

Everything here is deliberately naive: numeric integration of the density,
Monte Carlo, truncated sums over the latent count, finite differences.  None
of these functions call the closed forms they are used to check, so they can
arbitrate between a closed form and its published transcription.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .core import NpsModel
from .power_series import DomainError, PowerSeriesFamily, SeriesTruncationError, get_family, max_series_terms

ORACLE_METHODS = ("quadrature", "monte-carlo", "truncated-sum", "finite-difference", "ks-test")


@dataclass(frozen=True)
class OracleReport:
    """One verified quantity; ``error_estimate`` is positive for stochastic methods."""

    quantity: str
    value: float
    error_estimate: float
    method: str

    def __post_init__(self):
        if self.method not in ORACLE_METHODS:
            raise ValueError(f"unknown oracle method {self.method!r}")
        if self.error_estimate < 0 or (self.method == "monte-carlo" and not self.error_estimate > 0):
            raise ValueError("bad error estimate for oracle report")

    def line(self, **extra) -> str:
        """``key=value`` rendering used by the ``verify`` report."""
        fields = dict(quantity=self.quantity, method=self.method, value=f"{self.value:.12g}",
                      error=f"{self.error_estimate:.3g}")
        fields.update({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in extra.items()})
        return " ".join(f"{k}={v}" for k, v in fields.items())


def integrate_pdf(model: NpsModel, k: int = 0) -> OracleReport:
    """
    ``int y^k f(y) dy`` over ``mu +- 12 sigma`` by adaptive quadrature of
    :meth:`NpsModel.pdf`, plus a bound on what lies outside.

    The tail bound uses that ``f(y) <= K phi(z) / sigma`` with ``K`` the
    largest value of ``|theta| C'(theta t) / |C(theta)|`` over ``t`` in [0, 1].
    """
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    mu, s = model.mu, model.sigma
    f = lambda y: model.pdf(y) * y**k
    pts = [mu + s * t for t in (-12, -6, -3, -1, 0, 1, 3, 6, 12)]
    value, err = 0.0, 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        v, e = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        value += v
        err += e
    # |y|^k phi beyond 12 sigma: crude but rigorous-ish envelope
    K = _density_envelope(model)
    r = 12.0
    tail = K * 2 * stats.norm.sf(r) * (abs(mu) + s * (r + 1.0)) ** k
    return OracleReport(f"int_y^{k}_pdf", float(value), float(err + tail), "quadrature")


def _density_envelope(model: NpsModel) -> float:
    if model.is_limit:
        return float(model.family.truncation_index)
    fam, th = model.family, model.theta
    # C' is monotone along the segment from 0 to theta
    top = max(float(fam.dC(0.0)), float(fam.dC(th)))
    return abs(th) * top / abs(float(fam.C(th)))


def mc_moments(model: NpsModel, n_draws: int = 10**6, seed: int = 0, method: str = "auto") -> list:
    """
    Monte Carlo raw moments ``E(Y^k)``, ``k = 1..4``, with standard errors.

    Proper-domain models use the compounding construction; others use
    rejection from the normal envelope, so no quantile function is involved.
    """
    if n_draws < 1000:
        raise ValueError("n_draws must be at least 1000")
    rng = np.random.default_rng(seed)
    if method == "auto":
        method = "compound" if (model.is_proper or model.is_limit) else "rejection"
    if method == "compound":
        if model.is_limit:
            c = model.family.truncation_index
            y = rng.normal(model.mu, model.sigma, size=(n_draws, c)).max(axis=1)
        else:
            y = model.sample_compound(rng, size=n_draws)
    elif method == "rejection":
        y = rejection_sample(model, rng, n_draws)
    else:
        raise ValueError(f"unknown Monte Carlo method {method!r}")
    out = []
    for k in range(1, 5):
        v = y**k
        out.append(OracleReport(f"E[Y^{k}]", float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_draws)), "monte-carlo"))
    return out


def rejection_sample(model: NpsModel, rng, size: int) -> np.ndarray:
    """Accept-reject draws with a ``N(mu, sigma^2)`` proposal."""
    K = _density_envelope(model)
    out = np.empty(0)
    while out.size < size:
        m = int(1.2 * K * (size - out.size)) + 100
        y = rng.normal(model.mu, model.sigma, size=m)
        ratio = model.pdf(y) / (K * stats.norm.pdf(y, model.mu, model.sigma))
        if np.any(ratio > 1 + 1e-9):
            raise RuntimeError("rejection envelope violated")
        out = np.concatenate([out, y[rng.random(m) < ratio]])
    return out[:size]


def posterior_sums(family, theta_star: float, rmax: int = 2, tol: float = 1e-15) -> list:
    """
    Moments ``E(Z^r)`` for ``r = 1..rmax`` of the posterior
    ``g(z) propto a_z z theta*^(z-1)``, by direct summation with the weights
    normalised by their own sum.
    """
    fam = get_family(family)
    if not 0.0 < theta_star < fam.upper:
        raise DomainError("theta_star must lie in the proper domain")
    cap = max_series_terms()
    size = 64
    while True:
        top = min(size, fam.max_support or size)
        z = np.arange(1, top + 1, dtype=float)
        logw = fam.log_coef(z) + np.log(z) + (z - 1) * math.log(theta_star)
        w = np.exp(logw - np.max(logw))
        w = np.where(np.isfinite(logw), w, 0.0)
        total = w.sum()
        # the last terms must be negligible even after weighting by z^rmax
        if fam.max_support is not None and top == fam.max_support:
            break
        if w[-1] * z[-1] ** rmax / total < tol and w[-1] <= w[-2]:
            break
        size *= 4
        if size > cap:
            raise SeriesTruncationError("posterior sum did not converge before the term cap")
    return [
        OracleReport(f"E[Z^{r}|y]", float(math.fsum(w * z**r) / total), 0.0, "truncated-sum")
        for r in range(1, rmax + 1)
    ]


def fd_grad(fn: Callable, x: Sequence[float], h=1e-6) -> np.ndarray:
    """Central-difference gradient; ``h`` is a scalar or per-coordinate."""
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(h <= 0):
        raise ValueError("step must be positive")
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h[i])
    return g


def fd_hess(fn: Callable, x: Sequence[float], h=1e-4) -> np.ndarray:
    """Central-difference Hessian (four-point stencil off the diagonal)."""
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(h <= 0):
        raise ValueError("step must be positive")
    d = x.size
    H = np.empty((d, d))
    f0 = fn(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (fn(x + ei) - 2 * f0 + fn(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov p-value."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        raise ValueError("degenerate samples")
    return float(stats.ks_2samp(a, b).pvalue)


# -- discrepancy report -------------------------------------------------------


def _status(ok: bool) -> str:
    return "ok" if ok else "discrepancy"


def verification_report(seed: int = 0, quick: bool = False) -> list:
    """
    Line-oriented ``key=value`` report comparing closed forms, published
    transcriptions and the oracles in this module.
    """
    from .inference import (Psi, e_step, info_report, louis_information, score, loglik, fit_direct)
    from .moments import (approx_moments, approx_moments_printed, mean_series, moments_quantile_integral,
                          second_moment_series, second_moment_series_printed)

    lines = []
    models = [NpsModel("ng", 0, 1, 0.5), NpsModel("ng", 0, 1, -2.0), NpsModel("np", 0, 1, 1.0),
              NpsModel("nl", 0, 1, 0.5), NpsModel("nb:3", 0, 1, 0.5), NpsModel("nnb:2", 0, 1, 0.5)]
    for m in models:
        tag = f"{m.family.spec}({m.mu:g},{m.sigma:g},{m.theta:g})"
        rep = integrate_pdf(m, 0)
        lines.append(rep.line(model=tag, reference=1.0, status=_status(abs(rep.value - 1) < 1e-8)))
        qi = moments_quantile_integral(m)
        for k, ref in ((1, qi.m1), (2, qi.m2)):
            rep = integrate_pdf(m, k)
            lines.append(rep.line(model=tag, reference=ref, reference_method="quantile-integral",
                                  status=_status(abs(rep.value - ref) < 1e-8)))
        if m.is_proper:
            ms = mean_series(m)
            lines.append(OracleReport("series_mean", ms, 1e-12, "truncated-sum").line(
                model=tag, reference=qi.m1, status=_status(abs(ms - qi.m1) < 1e-6)))
            s2 = second_moment_series(m)
            lines.append(OracleReport("series_E2", s2, 1e-12, "truncated-sum").line(
                model=tag, reference=qi.m2, status=_status(abs(s2 - qi.m2) < 1e-6)))
            p2 = second_moment_series_printed(m)
            lines.append(OracleReport("series_E2_printed", p2, 1e-12, "truncated-sum").line(
                model=tag, reference=qi.m2, status=_status(abs(p2 - qi.m2) < 1e-6)))

    # Monte Carlo against quadrature, including an extended-domain point
    n_draws = 10**5 if quick else 10**6
    for m in (NpsModel("ng", 0, 1, -5.0), NpsModel("np", 0, 1, 1.0)):
        tag = f"{m.family.spec}({m.mu:g},{m.sigma:g},{m.theta:g})"
        qi = moments_quantile_integral(m)
        for rep, ref in zip(mc_moments(m, n_draws, seed), (qi.m1, qi.m2, qi.m3, qi.m4)):
            z = (rep.value - ref) / rep.error_estimate
            lines.append(rep.line(model=tag, reference=ref, z=float(z), status=_status(abs(z) < 4)))

    # closed-form moment approximations
    for m in (NpsModel("ng", 0, 1, 0.5), NpsModel("np", 0, 2, 1.0), NpsModel("nb:3", 0, 1, 0.5)):
        tag = f"{m.family.spec}({m.mu:g},{m.sigma:g},{m.theta:g})"
        lin = approx_moments(m)
        pe1, pe2 = approx_moments_printed(m)
        for name, val, ref in (("approx_E1_printed", pe1, lin.m1), ("approx_E2_printed", pe2, lin.m2)):
            lines.append(OracleReport(name, float(val), 0.0, "quadrature").line(
                model=tag, reference=ref, reference_method="linearization",
                status=_status(abs(val - ref) < 1e-9 * max(1.0, abs(ref)))))

    # latent-count posterior
    for spec, ts in (("geometric", 0.5), ("poisson", 2.0), ("logarithmic", 0.7), ("binomial:4", 1.5),
                     ("negbinomial:3", 0.4)):
        fam = get_family(spec)
        th = min(2 * ts, 0.5 * (ts + fam.upper))
        y0 = float(special.ndtri(ts / th))
        ts = th * float(special.ndtr(y0))
        post = e_step(fam, Psi(0.0, 1.0, th), [y0])
        sums = posterior_sums(fam, ts)
        var = sums[1].value - sums[0].value ** 2
        lines.append(sums[0].line(family=spec, theta_star=ts, reference=float(post.ez[0]),
                                  status=_status(abs(sums[0].value - post.ez[0]) < 1e-8)))
        lines.append(OracleReport("Var[Z|y]", var, 0.0, "truncated-sum").line(
            family=spec, theta_star=ts, reference=float(post.varz[0]),
            status=_status(abs(var - post.varz[0]) < 1e-8)))

    # likelihood derivatives on simulated data
    rng = np.random.default_rng(seed)
    for spec, psi in (("ng", Psi(1.0, 2.0, 0.5)), ("np", Psi(1.0, 2.0, 0.8))):
        y = NpsModel(spec, psi.mu, psi.sigma, psi.theta).sample(rng, size=500)
        g = score(spec, psi, y)
        fd = fd_grad(lambda v: loglik(spec, Psi(*v), y), psi.as_array(), 1e-6)
        for name, a, b in zip(("mu", "sigma", "theta"), g, fd):
            rel = abs(a - b) / max(abs(b), 1e-300)
            lines.append(OracleReport(f"score_{name}", float(b), float(abs(a - b)), "finite-difference").line(
                family=spec, analytic=float(a), rel_gap=float(rel), status=_status(rel < 1e-5)))
        rep = info_report(spec, psi, y)
        for ln in rep.lines():
            lines.append(f"quantity=observed_info family={spec} {ln}")
        fit = fit_direct(spec, y)
        if fit.converged:
            lo = louis_information(spec, fit.psi_hat, y)
            lp = louis_information(spec, fit.psi_hat, y, printed=True)
            fdm = info_report(spec, fit.psi_hat, y).fd
            names = ("mu", "sigma", "theta")
            for i in range(3):
                for j in range(i, 3):
                    lines.append(
                        f"quantity=louis_info family={spec} entry=I_{names[i]}{names[j]} corrected={lo[i, j]:.10g} "
                        f"printed={lp[i, j]:.10g} fd={fdm[i, j]:.10g} "
                        f"status={_status(abs(lo[i, j] - fdm[i, j]) <= 5e-2 * max(abs(fdm[i, j]), 1e-6 * y.size))}"
                    )
    return lines
