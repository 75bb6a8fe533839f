"""
Moments of NPS distributions.

Three routes are available:

* :func:`moments_quantile_integral` -- ``E(Y^k) = int_0^1 Q(u)^k du`` with the
  quantile function ``Q`` written through ``Cinv``; works on every valid
  ``theta`` and is the reference method.
* :func:`mean_series`, :func:`mgf_series`, :func:`second_moment_series` --
  mixtures over ``N`` of order-statistic moments of the normal, each term an
  equicorrelated normal orthant probability (:func:`orthant_prob`).  Proper
  domain only.
* :func:`approx_moments` -- first-order expansion ``erfinv(x) ~ x sqrt(pi)/2``
  of the quantile, giving closed forms for ``E(Y)`` and ``E(Y^2)``.  These are
  crude by design.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize, special
from scipy.stats import norm

from .core import NpsModel
from .power_series import Binomial, DomainError, Geometric, Poisson, pmf_table

SQRT_2PI = math.sqrt(2.0 * math.pi)

METHODS = ("quantile-integral", "series", "approximation", "monte-carlo")


@dataclass(frozen=True)
class MomentSummary:
    """
    Raw moments ``m1..m4`` plus variance, skewness ``mu3/sd^3`` and kurtosis
    ``mu4/sd^4`` (so the normal has kurtosis 3).

    Entries a method cannot produce are NaN.  ``est_error`` is the method's
    own error estimate (quadrature error, Monte Carlo standard error, or the
    observed gap for approximations).
    """

    m1: float
    m2: float
    m3: float
    m4: float
    variance: float
    skewness: float
    kurtosis: float
    method: str
    est_error: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown moment method {self.method!r}")

    @classmethod
    def from_raw(cls, raw: Sequence[float], method: str, est_error: float = 0.0) -> "MomentSummary":
        m = list(raw) + [math.nan] * (4 - len(raw))
        m1, m2, m3, m4 = (float(v) for v in m[:4])
        var = m2 - m1 * m1
        if var < 0:
            raise ValueError(f"negative variance {var!r} from raw moments")
        sd = math.sqrt(var)
        mu3 = m3 - 3 * m1 * m2 + 2 * m1**3
        mu4 = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
        return cls(m1, m2, m3, m4, var, mu3 / sd**3, mu4 / var**2, method, float(est_error))

    def as_dict(self) -> dict:
        return asdict(self)

    def table_row(self) -> Tuple[float, ...]:
        """Values in the order E, E2, E3, E4, Var, Sk, Kur."""
        return (self.m1, self.m2, self.m3, self.m4, self.variance, self.skewness, self.kurtosis)


# -- orthant probabilities ---------------------------------------------------


@dataclass(frozen=True)
class OrthantSpec:
    """
    ``P(X_i <= t_i, i = 1..dim)`` for ``X ~ N(0, I + c 11^T)``.

    ``shift`` is a scalar (common threshold) or a length-``dim`` sequence.
    """

    dim: int
    offdiag: float
    shift: Union[float, Tuple[float, ...]] = 0.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 0:
            raise DomainError(f"orthant dimension must be a nonnegative integer, got {self.dim!r}")
        if not 1.0 + self.offdiag * self.dim > 0:
            raise DomainError("I + c 11^T is not positive definite")
        if self.offdiag < 0:
            # the one-factor reduction X_i = sqrt(c) Z + e_i needs c >= 0
            raise DomainError("negative equicorrelation is not supported")
        if not np.isscalar(self.shift):
            object.__setattr__(self, "shift", tuple(float(s) for s in self.shift))
            if len(self.shift) != self.dim:
                raise DomainError("shift vector length must equal dim")


def orthant_prob(spec: OrthantSpec) -> float:
    """
    Orthant probability by the one-factor representation
    ``X_i = sqrt(c) Z + e_i``::

        P = int phi(z) prod_i Phi(t_i - sqrt(c) z) dz

    The integrand is log-concave; it is integrated by adaptive quadrature
    over 12 units either side of its mode.
    """
    dim, c = spec.dim, spec.offdiag
    if dim == 0:
        return 1.0
    if np.isscalar(spec.shift):
        return _orthant_equal(dim, float(c), float(spec.shift))
    t = np.asarray(spec.shift, dtype=float)
    return _orthant_vector(t, float(c))


@lru_cache(maxsize=8192)
def _orthant_equal(dim: int, c: float, t: float) -> float:
    if c == 0.0:
        return float(special.ndtr(t) ** dim)
    sc = math.sqrt(c)

    def logf(z):
        return norm.logpdf(z) + dim * special.log_ndtr(t - sc * z)

    def dlogf(z):
        w = t - sc * z
        mills = math.exp(norm.logpdf(w) - special.log_ndtr(w))
        return -z - dim * sc * mills

    return _integrate_logconcave(logf, dlogf)


def _orthant_vector(t: np.ndarray, c: float) -> float:
    if c == 0.0:
        return float(np.prod(special.ndtr(t)))
    sc = math.sqrt(c)

    def logf(z):
        return norm.logpdf(z) + special.log_ndtr(t - sc * z).sum()

    def dlogf(z):
        w = t - sc * z
        return -z - sc * np.exp(norm.logpdf(w) - special.log_ndtr(w)).sum()

    return _integrate_logconcave(logf, dlogf)


def _integrate_logconcave(logf, dlogf) -> float:
    mode = optimize.brentq(dlogf, -60.0, 60.0, xtol=1e-12)
    peak = logf(mode)
    f = lambda z: math.exp(logf(z) - peak)
    total = 0.0
    for a, b in ((mode - 12.0, mode), (mode, mode + 12.0)):
        val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += val
    return total * math.exp(peak)


# -- quantile-integral moments ---------------------------------------------

_EPS = 1e-12
_BREAKS = (1e-12, 1e-8, 1e-4, 1e-2, 0.1, 0.5, 0.9, 0.99, 1 - 1e-4, 1 - 1e-8, 1 - 1e-12)


def _quantile_fn(model: NpsModel):
    fam, th = model.family, model.theta
    if model.is_limit:
        c = fam.truncation_index
        return lambda u: special.ndtri(u ** (1.0 / c))
    scale = float(fam.C(th))
    return lambda u: special.ndtri(fam._Cinv(scale * u) / th)


def raw_moment_quantile_integral(model: NpsModel, k: int) -> Tuple[float, float]:
    """
    ``E(Y^k)`` and an error estimate, integrating the quantile function over
    ``(eps, 1 - eps)`` with ``eps = 1e-12`` and adding a Gaussian-tail estimate
    for the two excluded end pieces.
    """
    if k < 0 or int(k) != k:
        raise ValueError("moment order must be a nonnegative integer")
    if k == 0:
        return 1.0, 0.0
    q = _quantile_fn(model)
    mu, sigma = model.mu, model.sigma
    integrand = lambda u: (mu + sigma * q(u)) ** k
    value, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(_BREAKS[:-1], _BREAKS[1:]):
            try:
                v, e = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
            except integrate.IntegrationWarning:
                # keep the best estimate and report the achieved error
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    v, e = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)
                e = max(e, 1e-10 * abs(v))
            value += v
            err += e
    # tail pieces: for a Gaussian-type tail, int_0^eps |z(u)|^k du ~ eps |z_eps|^k (1 + k / z_eps^2)
    for u in (_EPS, 1.0 - _EPS):
        z = float(q(u))
        tail = _EPS * (mu + sigma * z) ** k * (1.0 + k / (z * z))
        value += tail
        err += abs(tail)
    return value, err


def moments_quantile_integral(model: NpsModel, kmax: int = 4) -> MomentSummary:
    """Raw moments up to ``kmax`` (at least 4 for the summary) by quadrature of the quantile."""
    if kmax < 4:
        raise ValueError("the summary needs kmax >= 4; use raw_moment_quantile_integral for single moments")
    raw, err = [], 0.0
    for k in range(1, 5):
        v, e = raw_moment_quantile_integral(model, k)
        raw.append(v)
        err = max(err, e)
    return MomentSummary.from_raw(raw, "quantile-integral", err)


# -- series moments ------------------------------------------------------------


def _series_table(model: NpsModel, tol: float, power: int):
    if model.is_limit or not model.is_proper:
        raise DomainError("series moments need theta in the proper domain")
    return pmf_table(model.family, model.theta, tol, power=power)


def mean_series(model: NpsModel, tol: float = 1e-12) -> float:
    """
    ``E(Y) = mu + sigma/(2 sqrt(pi)) sum_n P(N=n) n (n-1) Phi_{n-2}(0; I + 11^T/2)``.
    """
    n, p = _series_table(model, tol, power=1)
    terms = [
        pn * nn * (nn - 1) * orthant_prob(OrthantSpec(int(nn) - 2, 0.5)) if nn >= 2 else 0.0
        for nn, pn in zip(n, p)
    ]
    return model.mu + model.sigma * math.fsum(terms) / (2.0 * math.sqrt(math.pi))


def second_moment_series(model: NpsModel, tol: float = 1e-12) -> float:
    """
    ``E(Y^2)`` from ``E(X_(n)^2) = 1 + n(n-1)(n-2) / (4 sqrt(3) pi) Phi_{n-3}(0; I + 11^T/3)``
    for the maximum of ``n`` standard normals.
    """
    n, p = _series_table(model, tol, power=2)
    terms = [
        pn * nn * (nn - 1) * (nn - 2) * orthant_prob(OrthantSpec(int(nn) - 3, 1.0 / 3.0)) if nn >= 3 else 0.0
        for nn, pn in zip(n, p)
    ]
    std2 = 1.0 + math.fsum(terms) / (4.0 * math.sqrt(3.0) * math.pi)
    std1 = (mean_series(model.with_params(mu=0.0, sigma=1.0), tol))
    mu, s = model.mu, model.sigma
    return mu * mu + 2.0 * mu * s * std1 + s * s * std2


def second_moment_series_printed(model: NpsModel, tol: float = 1e-12) -> float:
    """
    Second-moment series with the published weights, kept for discrepancy
    reporting only: ``n(n-1)(n-3)`` for the geometric/Poisson/negative-binomial
    forms and ``n(n-2)(n-3)`` for binomial/logarithmic.  Standard case
    (``mu = 0``, ``sigma = 1``).  Terms whose orthant dimension would be
    negative are dropped.
    """
    n, p = _series_table(model, tol, power=2)
    name = model.family.name
    if name in ("binomial", "logarithmic"):
        weight = lambda k: k * (k - 2) * (k - 3)
    else:
        weight = lambda k: k * (k - 1) * (k - 3)
    terms = [
        pn * weight(nn) * orthant_prob(OrthantSpec(int(nn) - 3, 1.0 / 3.0)) if nn >= 3 else 0.0
        for nn, pn in zip(n, p)
    ]
    return 1.0 + math.fsum(terms) / (4.0 * math.sqrt(3.0) * math.pi)


def mgf_series(model: NpsModel, t: float, tol: float = 1e-12) -> float:
    """
    Moment generating function
    ``M(t) = e^{mu t} e^{s^2/2} sum_n P(N=n) n Phi_{n-1}(s 1; I + 11^T)``, ``s = sigma t``.
    """
    s = model.sigma * t
    n, p = _series_table(model, tol * math.exp(-0.5 * s * s), power=1)
    terms = [pn * nn * orthant_prob(OrthantSpec(int(nn) - 1, 1.0, float(s))) for nn, pn in zip(n, p)]
    return math.exp(model.mu * t + 0.5 * s * s) * math.fsum(terms)


def moments_series(model: NpsModel, tol: float = 1e-12) -> MomentSummary:
    """Mean and second moment from the series; higher moments are NaN."""
    return MomentSummary.from_raw([mean_series(model, tol), second_moment_series(model, tol)], "series", tol)


# -- first-order approximations --------------------------------------------


def _uniform_moments(model: NpsModel) -> Tuple[float, float]:
    # E[T], E[T^2] for T = Phi((Y - mu)/sigma), whose density on (0, 1) is
    # theta C'(theta t) / C(theta); E[T^k] = 1 - k/C(theta) int_0^1 t^(k-1) C(theta t) dt
    fam, th = model.family, model.theta
    if isinstance(fam, Geometric):
        l1 = math.log1p(-th)
        i1 = -1.0 - l1 / th
        i2 = -0.5 - 1.0 / th - l1 / th**2
    elif isinstance(fam, Poisson):
        e = math.expm1(th)
        i1 = e / th - 1.0
        i2 = (math.exp(th) * (th - 1.0) + 1.0) / th**2 - 0.5
    elif isinstance(fam, Binomial):
        m = fam.shape
        u = 1.0 + th
        i1 = (u ** (m + 1) - 1.0) / (th * (m + 1)) - 1.0
        i2 = ((u ** (m + 2) - 1.0) / (m + 2) - (u ** (m + 1) - 1.0) / (m + 1)) / th**2 - 0.5
    else:
        raise ValueError(f"no moment approximation for family {fam.spec!r}")
    C = float(fam.C(th))
    return 1.0 - i1 / C, 1.0 - 2.0 * i2 / C


def approx_moments(model: NpsModel, reference: MomentSummary = None) -> MomentSummary:
    """
    Closed-form approximations of ``E(Y)`` and ``E(Y^2)`` for the geometric,
    Poisson and binomial families.

    Linearising the normal quantile, ``Phi^{-1}(t) ~ sqrt(2 pi) (t - 1/2)``,
    turns both moments into polynomials in ``E[T]``, ``E[T^2]`` with
    ``T = Phi(Z)``, which have elementary closed forms.  ``est_error`` is the
    largest gap to the quantile-integral values (computed unless
    ``reference`` is given).
    """
    fam = model.family
    if not isinstance(fam, (Geometric, Poisson, Binomial)):
        raise ValueError(f"no moment approximation for family {fam.spec!r}")
    a = model.mu - 0.5 * model.sigma * SQRT_2PI
    b = model.sigma * SQRT_2PI
    if model.is_limit:
        et, et2 = 0.5, 1.0 / 3.0
    else:
        et, et2 = _uniform_moments(model)
    m1 = a + b * et
    m2 = a * a + 2.0 * a * b * et + b * b * et2
    if reference is None:
        reference = moments_quantile_integral(model)
    gap = max(abs(m1 - reference.m1), abs(m2 - reference.m2))
    var = m2 - m1 * m1
    return MomentSummary(m1, m2, math.nan, math.nan, var, math.nan, math.nan, "approximation", gap)


def approx_moments_printed(model: NpsModel) -> Tuple[float, float]:
    """
    ``(E(Y), E(Y^2))`` from the published closed-form approximations, as
    typeset.  Kept to document where they disagree with :func:`approx_moments`.
    """
    fam, th, mu, s = model.family, model.theta, model.mu, model.sigma
    if model.is_limit:
        raise DomainError("the published approximations are undefined at theta = 0")
    pi, r = math.pi, SQRT_2PI
    if isinstance(fam, Geometric):
        l1 = math.log1p(-th)
        e1 = (2 * th**2 * mu + r * s * (2 * l1 * (1 - th) + 2 * th - th**2)) / (2 * th**2)
        e2 = (
            th**3 * (pi * s**2 + 2 * mu**2 - 2 * math.sqrt(2) * math.sqrt(pi) * s * mu)
            + 16 * pi * th * s**2
            + 28 * s * th**2 * (r * mu - 2 * pi * s)
            + 8 * s * l1 * (r * th * mu * (1 - th) + (th * (th - 3) + 2) * pi * s)
        ) / (4 * th * (th - 1) ** 2)
    elif isinstance(fam, Poisson):
        E = math.exp(th)
        e1 = ((2 + th) * s * r - 2 * th * mu + (2 * th * mu + (th - 2) * s * r) * E) / (2 * th * s * (E - 1))
        e2 = (
            s * mu * th * (4 * r + 2 * r * th)
            - 8 * pi * s**2
            - th**2 * (pi * s**2 + 2 * mu**2)
            - 4 * pi * th * s**2
            + (2 * th**2 * mu**2 + 8 * pi * s**2 - 4 * pi * th * s**2 + pi * th**2 * s**2
               + 2 * r * th**2 * s * mu - 4 * r * th * s * mu) * E
        ) / (2 * th**2 * (E - 1))
    elif isinstance(fam, Binomial):
        m = fam.shape
        P = (th + 1) ** m
        e1 = (
            2 * r * s
            + (r * s * (1 + m) - 2 * mu * (1 + m)) * th
            - (2 * r * s * (1 + m) + (r * s * (1 + m) - 2 * mu * (1 + m)) * th - 2 * r * m * s * (th + 1)) * P
        ) / (2 * th * (P - 1) * (m + 1))
        A = (-2 * mu**2 + r * m**2 * s * mu - 1.5 * pi * m * s**2 - pi * s**2 - 3 * m * mu**2
             + 3 * r * m * s * mu - m**2 * mu**2 - 0.5 * pi * m**2 * s**2 + 2 * r * s * mu) * th**2
        B = (4 * r * s * mu + 2 * r * m * s * mu - 2 * pi * m * s**2 - 4 * pi * s**2) * th
        D = ((2 * mu**2 + 3 * m * mu**2 + pi * s**2 + r * m * s * mu + r * m**2 * s * mu - 2 * r * s * mu
              - 0.5 * pi * m * s**2 + 0.5 * pi * m**2 * s**2 + m**2 * mu**2) * th**2
             + 4 * pi * s**2 + (4 * pi * s**2 - 2 * pi * m * s**2 - 4 * r * s * mu - 2 * r * m * s * mu) * th) * P
        # denominator read as theta^2 ((theta+1)^m - 1)(m+2)(m+1)
        e2 = (A + B + D) / (th**2 * (P - 1) * (m + 2) * (m + 1))
    else:
        raise ValueError(f"no published approximation for family {fam.spec!r}")
    return e1, e2
