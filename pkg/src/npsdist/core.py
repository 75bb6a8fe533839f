"""
The normal power-series (NPS) distribution.

``Y = max(X_1, ..., X_N)`` with ``X_i ~ N(mu, sigma^2)`` i.i.d. and ``N`` a
zero-truncated power-series variable.  Marginally

.. math::
    F(y) = \\frac{C(\\theta \\Phi(z))}{C(\\theta)}, \\qquad
    f(y) = \\frac{\\theta}{\\sigma} \\phi(z) \\frac{C'(\\theta\\Phi(z))}{C(\\theta)},
    \\qquad z = (y - \\mu) / \\sigma .

The formulas stay a density for some negative ``theta`` (the *extended*
domain of each family); there the compounding story and the samplers that
rely on it are unavailable.  ``theta = 0`` denotes the limiting law
``Phi(z)**c`` with ``c`` the family's truncation index.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
import numpy as np
from scipy import optimize, special
from scipy.stats import norm

from .power_series import (
    DomainError,
    PowerSeriesFamily,
    get_family,
    pmf_table,
    sample_n,
)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class PrecisionWarning(RuntimeWarning):
    """A result lost all significant digits (e.g. survival underflow)."""


def _phi_cdf(z):
    return special.ndtr(z)


def _phi_inv(t):
    # same convention as mu + sigma*sqrt(2)*erfinv(2t - 1), better in the tails
    return special.ndtri(t)


@dataclass(frozen=True)
class NpsModel:
    """
    NPS distribution with location ``mu``, scale ``sigma`` and shape ``theta``.

    Parameters
    ----------
    family : PowerSeriesFamily or str
        Mixing family, or a spec string accepted by
        :func:`~npsdist.power_series.get_family`.
    mu : float
    sigma : float
        Must be positive.
    theta : float
        In the family's extended domain, or exactly 0 for the limit law.
    """

    family: PowerSeriesFamily
    mu: float = 0.0
    sigma: float = 1.0
    theta: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "family", get_family(self.family))
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "theta", float(self.theta))
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu!r}")
        if self.theta != 0.0:
            self.family.check_extended(self.theta)

    @property
    def is_limit(self) -> bool:
        """True for ``theta == 0``, the ``Phi**c`` limiting law."""
        return self.theta == 0.0

    @property
    def is_proper(self) -> bool:
        """True when ``theta`` is a valid power-series parameter."""
        return self.family.in_proper(self.theta)

    def standardize(self, y):
        return (np.asarray(y, dtype=float) - self.mu) / self.sigma

    def with_params(self, **changes) -> "NpsModel":
        params = dict(family=self.family, mu=self.mu, sigma=self.sigma, theta=self.theta)
        params.update(changes)
        return NpsModel(**params)

    # -- distribution functions -------------------------------------------

    def logpdf(self, y):
        z = self.standardize(y)
        fam, th = self.family, self.theta
        c = fam.truncation_index
        if self.is_limit:
            out = math.log(c) + (c - 1) * special.log_ndtr(z) + norm.logpdf(z) - math.log(self.sigma)
            return out if out.ndim else float(out)
        x = th * _phi_cdf(z)
        out = (
            math.log(abs(th))
            - math.log(self.sigma)
            - 0.5 * z * z
            - _LOG_SQRT_2PI
            + fam.log_dC(x)
            - math.log(abs(float(fam.C(th))))
        )
        return out if np.ndim(out) else float(out)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        z = self.standardize(y)
        c = self.family.truncation_index
        if self.is_limit:
            out = _phi_cdf(z) ** c
        else:
            th = self.theta
            out = self.family.C(th * _phi_cdf(z)) / self.family.C(th)
        return out if np.ndim(out) else float(out)

    def survival(self, y):
        """``1 - cdf``, computed from the upper-tail normal probability."""
        z = self.standardize(y)
        c = self.family.truncation_index
        if self.is_limit:
            out = -np.expm1(c * special.log_ndtr(z))
        else:
            th = self.theta
            x = th * _phi_cdf(z)
            gap = th * _phi_cdf(-z)
            out = self.family.C_gap(th, x, gap) / self.family.C(th)
        return out if np.ndim(out) else float(out)

    def hazard(self, y):
        """
        ``pdf / survival``.

        Where the survival function underflows to zero the hazard is returned
        as ``+inf`` and a :class:`PrecisionWarning` is issued.
        """
        logf = np.asarray(self.logpdf(y), dtype=float)
        s = np.asarray(self.survival(y), dtype=float)
        underflow = s <= 0.0
        with np.errstate(divide="ignore"):
            out = np.where(underflow, np.inf, np.exp(logf - np.log(np.where(underflow, 1.0, s))))
        if np.any(underflow):
            warnings.warn("survival underflow; hazard reported as +inf", PrecisionWarning, stacklevel=2)
        return out if out.ndim else float(out)

    def quantile(self, gamma):
        """
        Inverse cdf.

        Uses the closed form ``mu + sigma * Phi^{-1}(Cinv(gamma C(theta)) / theta)``,
        valid on the extended domains too since ``C`` is monotone there.
        Levels where it is not finite fall back to a bracketed root solve.
        """
        g = np.asarray(gamma, dtype=float)
        if np.any(~((g > 0) & (g < 1))):
            raise DomainError("quantile level must lie in (0, 1)")
        c = self.family.truncation_index
        if self.is_limit:
            t = g ** (1.0 / c)
            out = self.mu + self.sigma * _phi_inv(t)
        else:
            th = self.theta
            with np.errstate(all="ignore"):
                t = self.family.Cinv(g * self.family.C(th)) / th
                out = self.mu + self.sigma * _phi_inv(t)
            bad = ~np.isfinite(out)
            if np.any(bad):
                out = np.array(out, dtype=float)
                out[bad] = np.vectorize(self._quantile_root, otypes=[float])(g[bad])
        return out if np.ndim(out) else float(out)

    def _quantile_root(self, g: float) -> float:
        lo, hi = self.mu - 15.0 * self.sigma, self.mu + 15.0 * self.sigma
        f = lambda y: self.cdf(y) - g
        width = 15.0 * self.sigma
        while f(lo) > 0:
            width *= 2.0
            lo = self.mu - width
        width = 15.0 * self.sigma
        while f(hi) < 0:
            width *= 2.0
            hi = self.mu + width
        return optimize.brentq(f, lo, hi, xtol=1e-14 * self.sigma, rtol=4 * np.finfo(float).eps, maxiter=200)

    # -- sampling ------------------------------------------------------------

    def sample_inverse(self, rng=None, size=None):
        """Draws by applying :meth:`quantile` to uniforms."""
        rng = np.random.default_rng(rng)
        u = rng.random(size)
        # rng.random can return exactly 0
        u = np.where(u == 0.0, np.finfo(float).tiny, u)
        return self.quantile(u)

    def sample_compound(self, rng=None, size=None):
        """
        Draws as the maximum of ``N`` normal variables, ``N`` from the family.

        Requires ``theta`` in the proper domain.
        """
        if not self.is_proper:
            raise DomainError(f"compound sampling needs theta in the proper domain, got {self.theta}")
        rng = np.random.default_rng(rng)
        count = 1 if size is None else int(np.prod(size))
        n = np.atleast_1d(sample_n(self.family, self.theta, rng, size=count))
        x = rng.normal(self.mu, self.sigma, size=int(n.sum()))
        starts = np.concatenate(([0], np.cumsum(n)[:-1]))
        out = np.maximum.reduceat(x, starts)
        return float(out[0]) if size is None else out.reshape(size)

    def sample(self, rng=None, size=None, method: str = "inverse"):
        if method == "inverse":
            return self.sample_inverse(rng, size)
        if method == "compound":
            return self.sample_compound(rng, size)
        raise ValueError(f"unknown sampler {method!r}")

    # -- series representation ---------------------------------------------

    def mixture_pdf(self, y, tol: float = 1e-10):
        """
        Density as a mixture of order-statistic densities,
        ``sum_n n Phi(z)^(n-1) phi(z) / sigma * P(N = n)``, truncated so the
        neglected part is below ``tol``.
        """
        if not self.is_proper:
            raise DomainError("mixture representation needs theta in the proper domain")
        if tol <= 0:
            raise ValueError("tol must be positive")
        # each neglected term is at most n P(N=n) phi(0) / sigma
        n, p = pmf_table(self.family, self.theta, tol * self.sigma * math.sqrt(2 * math.pi), power=1)
        z = np.atleast_1d(self.standardize(y))
        logphi = special.log_ndtr(z)
        dens = norm.pdf(z) / self.sigma
        with np.errstate(divide="ignore", invalid="ignore"):
            powers = np.exp(np.outer(logphi, n - 1.0))
        out = dens * (powers * (n * p)).sum(axis=1)
        return out if np.ndim(y) else float(out[0])


def limit_theta_zero_cdf(family, mu: float, sigma: float, y):
    """``lim_{theta -> 0+} F(y) = Phi((y - mu) / sigma) ** c``."""
    family = get_family(family)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    out = _phi_cdf((np.asarray(y, dtype=float) - mu) / sigma) ** family.truncation_index
    return out if np.ndim(out) else float(out)

