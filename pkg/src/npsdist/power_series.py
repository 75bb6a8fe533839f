"""
Zero-truncated power-series distributions.

A power-series law on the positive integers has mass function

.. math::
    P(N = n) = \\frac{a_n \\theta^n}{C(\\theta)}, \\qquad
    C(\\theta) = \\sum_{n \\ge 1} a_n \\theta^n .

Five families are provided (geometric, Poisson, logarithmic, binomial and
negative binomial).  Besides the mass function each family exposes ``C`` and
its first three derivatives, a closed-form inverse of ``C`` and the parameter
domains on which the compound normal density stays valid.

Families are selected by name with an optional integer shape, e.g.
``"binomial:5"`` or ``"negbinomial:2"``; see :func:`get_family`.
"""

from __future__ import annotations

import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln

DEFAULT_MAX_SERIES = 10**6


class DomainError(ValueError):
    """Parameter outside the domain where a quantity is defined."""


class SeriesTruncationError(RuntimeError):
    """A series did not reach its tail tolerance before the hard term cap."""


def max_series_terms() -> int:
    """Hard cap on series length; ``NPS_MAX_SERIES`` overrides the default."""
    value = os.environ.get("NPS_MAX_SERIES")
    if value is None:
        return DEFAULT_MAX_SERIES
    cap = int(value)
    if cap < 1:
        raise ValueError(f"NPS_MAX_SERIES must be positive, got {value!r}")
    return cap


@dataclass(frozen=True)
class Interval:
    """Open interval ``(lo, hi)``; infinite endpoints allowed."""

    lo: float
    hi: float

    def __contains__(self, x) -> bool:
        return bool(self.lo < x < self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _checked(value, what: str):
    # overflow must be reported, never returned as a silent inf
    arr = np.asarray(value)
    if np.any(np.isinf(arr)):
        raise OverflowError(f"{what} overflowed")
    return value


class PowerSeriesFamily(ABC):
    """
    Base class for a zero-truncated power-series family.

    Subclasses provide the coefficients ``a_n`` (in log form), ``C`` and its
    derivatives in closed form, and :meth:`Cinv`.  Instances are immutable
    and hold no state beyond the optional integer shape.

    Attributes
    ----------
    name : str
        Canonical family name, used in family spec strings.
    shape : int or None
        ``m`` for the binomial family, ``k`` for the negative binomial.
    """

    name: str = ""
    shape: Optional[int] = None

    #: upper end ``s`` of the proper domain ``(0, s)``
    upper: float = math.inf

    #: smallest ``n`` with ``a_n > 0``
    truncation_index: int = 1

    #: largest ``n`` with ``a_n > 0`` (None for infinite support)
    max_support: Optional[int] = None

    #: image of the extended domain under ``C``, i.e. where ``Cinv`` applies
    C_range: Tuple[float, float] = (-math.inf, math.inf)

    @property
    def spec(self) -> str:
        return self.name if self.shape is None else f"{self.name}:{self.shape}"

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, PowerSeriesFamily) and self.spec == other.spec

    def __hash__(self) -> int:
        return hash(self.spec)

    # -- domains -----------------------------------------------------------

    @property
    def proper_domain(self) -> Interval:
        return Interval(0.0, self.upper)

    @property
    def extended_domain(self) -> Tuple[Interval, ...]:
        """Disjoint open intervals (zero excluded) where the NPS pdf is a density."""
        return (self.proper_domain,)

    def in_proper(self, theta) -> bool:
        return theta in self.proper_domain

    def in_extended(self, theta) -> bool:
        return any(theta in iv for iv in self.extended_domain)

    def check_proper(self, theta) -> None:
        if not self.in_proper(theta):
            iv = self.proper_domain
            raise DomainError(
                f"{self.spec}: theta={theta!r} outside proper domain ({iv.lo}, {iv.hi})"
            )

    def check_extended(self, theta) -> None:
        if not self.in_extended(theta):
            ivs = ", ".join(f"({iv.lo}, {iv.hi})" for iv in self.extended_domain)
            raise DomainError(f"{self.spec}: theta={theta!r} outside {ivs}")

    @property
    def _eval_bounds(self) -> Tuple[float, float]:
        # closed hull of the extended domain plus zero, i.e. where the
        # closed forms of C and its derivatives may be evaluated
        ivs = self.extended_domain
        return min(iv.lo for iv in ivs), max(iv.hi for iv in ivs)

    def _check_eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self._eval_bounds
        bad = ~((x > lo) & (x < hi)) & ~np.isnan(x)
        if np.any(bad):
            raise DomainError(
                f"{self.spec}: argument {x[bad].flat[0]!r} outside ({lo}, {hi})"
            )
        return x

    # -- coefficients and closed forms -------------------------------------

    @abstractmethod
    def log_coef(self, n) -> np.ndarray:
        """``log a_n``; ``-inf`` where ``a_n = 0``."""

    @abstractmethod
    def _C(self, x): ...

    @abstractmethod
    def _dC(self, x): ...

    @abstractmethod
    def _d2C(self, x): ...

    @abstractmethod
    def _d3C(self, x): ...

    @abstractmethod
    def _log_dC(self, x): ...

    @abstractmethod
    def _Cinv(self, u): ...

    @abstractmethod
    def _C_gap(self, theta, x, gap): ...

    def C(self, theta):
        x = self._check_eval(theta)
        return _checked(self._C(x), f"{self.spec} C")

    def dC(self, theta):
        x = self._check_eval(theta)
        return _checked(self._dC(x), f"{self.spec} C'")

    def d2C(self, theta):
        x = self._check_eval(theta)
        return _checked(self._d2C(x), f"{self.spec} C''")

    def d3C(self, theta):
        x = self._check_eval(theta)
        return _checked(self._d3C(x), f"{self.spec} C'''")

    def log_dC(self, x):
        """``log C'(x)``, stable where ``C'`` itself would overflow."""
        return self._log_dC(self._check_eval(x))

    def Cinv(self, u):
        """Closed-form inverse of ``C``."""
        u = np.asarray(u, dtype=float)
        lo, hi = self.C_range
        bad = ~((u > lo) & (u < hi)) & (u != 0) & ~np.isnan(u)
        if np.any(bad):
            raise DomainError(f"{self.spec}: {u[bad].flat[0]!r} outside range of C")
        return self._Cinv(u)

    def C_gap(self, theta, x, gap):
        """
        ``C(theta) - C(x)`` evaluated without cancellation.

        ``gap`` must equal ``theta - x`` and should be computed by the caller
        from an accurate complementary quantity (e.g. ``theta * Phi(-z)``).
        """
        return self._C_gap(theta, np.asarray(x, dtype=float), np.asarray(gap, dtype=float))

    def mean_n(self, theta) -> float:
        """``E(N) = theta C'(theta) / C(theta)``."""
        return float(theta * self.dC(theta) / self.C(theta))


class Geometric(PowerSeriesFamily):
    name = "geometric"
    upper = 1.0
    C_range = (-1.0, math.inf)

    @property
    def extended_domain(self):
        return (Interval(-math.inf, 0.0), Interval(0.0, 1.0))

    def log_coef(self, n):
        n = np.asarray(n)
        return np.where(n >= 1, 0.0, -np.inf)

    def _C(self, x):
        return x / (1.0 - x)

    def _dC(self, x):
        return (1.0 - x) ** -2

    def _d2C(self, x):
        return 2.0 * (1.0 - x) ** -3

    def _d3C(self, x):
        return 6.0 * (1.0 - x) ** -4

    def _log_dC(self, x):
        return -2.0 * np.log1p(-x)

    def _Cinv(self, u):
        return u / (1.0 + u)

    def _C_gap(self, theta, x, gap):
        return gap / ((1.0 - theta) * (1.0 - x))


class Poisson(PowerSeriesFamily):
    name = "poisson"
    C_range = (-1.0, math.inf)

    @property
    def extended_domain(self):
        return (Interval(-math.inf, 0.0), Interval(0.0, math.inf))

    def log_coef(self, n):
        n = np.asarray(n)
        with np.errstate(invalid="ignore"):
            return np.where(n >= 1, -gammaln(np.maximum(n, 1) + 1.0), -np.inf)

    def _C(self, x):
        return np.expm1(x)

    def _dC(self, x):
        return np.exp(x)

    _d2C = _dC
    _d3C = _dC

    def _log_dC(self, x):
        return x

    def _Cinv(self, u):
        return np.log1p(u)

    def _C_gap(self, theta, x, gap):
        return np.exp(x) * np.expm1(gap)


class Logarithmic(PowerSeriesFamily):
    name = "logarithmic"
    upper = 1.0

    @property
    def extended_domain(self):
        return (Interval(-math.inf, 0.0), Interval(0.0, 1.0))

    def log_coef(self, n):
        n = np.asarray(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(n >= 1, -np.log(np.maximum(n, 1)), -np.inf)

    def _C(self, x):
        return -np.log1p(-x)

    def _dC(self, x):
        return 1.0 / (1.0 - x)

    def _d2C(self, x):
        return (1.0 - x) ** -2

    def _d3C(self, x):
        return 2.0 * (1.0 - x) ** -3

    def _log_dC(self, x):
        return -np.log1p(-x)

    def _Cinv(self, u):
        return -np.expm1(-u)

    def _C_gap(self, theta, x, gap):
        return np.log1p(gap / (1.0 - theta))


class Binomial(PowerSeriesFamily):
    """Zero-truncated binomial with ``m`` trials, ``a_n = binom(m, n)``."""

    name = "binomial"
    C_range = (-1.0, math.inf)

    def __init__(self, m: int):
        if int(m) != m or m < 1:
            raise ValueError(f"binomial shape must be a positive integer, got {m!r}")
        self.shape = int(m)
        self.max_support = int(m)

    @property
    def extended_domain(self):
        # (1 + theta * Phi) must stay positive, hence theta > -1
        return (Interval(-1.0, 0.0), Interval(0.0, math.inf))

    def log_coef(self, n):
        n = np.asarray(n)
        m = self.shape
        ok = (n >= 1) & (n <= m)
        nn = np.clip(n, 0, m)
        return np.where(ok, gammaln(m + 1.0) - gammaln(nn + 1.0) - gammaln(m - nn + 1.0), -np.inf)

    def _C(self, x):
        return np.expm1(self.shape * np.log1p(x))

    def _dC(self, x):
        m = self.shape
        return m * (1.0 + x) ** (m - 1)

    def _d2C(self, x):
        m = self.shape
        return m * (m - 1) * (1.0 + x) ** (m - 2)

    def _d3C(self, x):
        m = self.shape
        return m * (m - 1) * (m - 2) * (1.0 + x) ** (m - 3)

    def _log_dC(self, x):
        return math.log(self.shape) + (self.shape - 1) * np.log1p(x)

    def _Cinv(self, u):
        return np.expm1(np.log1p(u) / self.shape)

    def _C_gap(self, theta, x, gap):
        m = self.shape
        return (1.0 + x) ** m * np.expm1(m * np.log1p(gap / (1.0 + x)))


class NegativeBinomial(PowerSeriesFamily):
    """Zero-truncated negative binomial, ``a_n = binom(n - 1, k - 1)`` for ``n >= k``."""

    name = "negbinomial"
    upper = 1.0

    def __init__(self, k: int):
        if int(k) != k or k < 1:
            raise ValueError(f"negbinomial shape must be a positive integer, got {k!r}")
        self.shape = int(k)
        self.truncation_index = int(k)

    @property
    def _eval_bounds(self):
        return (0.0, 1.0)

    def _check_eval(self, x):
        x = np.asarray(x, dtype=float)
        bad = ~((x >= 0.0) & (x < 1.0)) & ~np.isnan(x)
        if np.any(bad):
            raise DomainError(f"{self.spec}: argument {x[bad].flat[0]!r} outside [0, 1)")
        return x

    def log_coef(self, n):
        n = np.asarray(n)
        k = self.shape
        ok = n >= k
        nn = np.maximum(n, k)
        return np.where(ok, gammaln(nn) - gammaln(k) - gammaln(nn - k + 1.0), -np.inf)

    def _C(self, x):
        return (x / (1.0 - x)) ** self.shape

    def _dC(self, x):
        k = self.shape
        return k * x ** (k - 1) / (1.0 - x) ** (k + 1)

    def _d2C(self, x):
        k = self.shape
        return k * (k - 1 + 2.0 * x) * x ** (k - 2) / (1.0 - x) ** (k + 2)

    def _d3C(self, x):
        k = self.shape
        if k == 1:
            return 6.0 / (1.0 - x) ** 4
        if k == 2:
            # x**(k-3) * poly has a removable singularity at x = 0
            return 12.0 * (1.0 + x) / (1.0 - x) ** 5
        poly = k * k + 6.0 * k * x + 6.0 * x * x - 3.0 * k - 6.0 * x + 2.0
        return k * poly * x ** (k - 3) / (1.0 - x) ** (k + 3)

    def _log_dC(self, x):
        k = self.shape
        with np.errstate(divide="ignore"):
            lx = np.log(x) if k > 1 else 0.0
        return math.log(k) + (k - 1) * lx - (k + 1) * np.log1p(-x)

    def _Cinv(self, u):
        v = u ** (1.0 / self.shape)
        return v / (1.0 + v)

    C_range = (0.0, math.inf)

    def Cinv(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise DomainError(f"{self.spec}: Cinv defined for u >= 0 only")
        return self._Cinv(u)

    def _C_gap(self, theta, x, gap):
        k = self.shape
        with np.errstate(divide="ignore"):
            ratio = np.log1p(-gap / (theta * (1.0 - x)))
        return self._C(theta) * -np.expm1(k * ratio)


_ALIASES = {
    "ng": "geometric",
    "geometric": "geometric",
    "np": "poisson",
    "poisson": "poisson",
    "nl": "logarithmic",
    "logarithmic": "logarithmic",
    "nb": "binomial",
    "binomial": "binomial",
    "nnb": "negbinomial",
    "negbinomial": "negbinomial",
}


def get_family(spec) -> PowerSeriesFamily:
    """
    Resolve a family spec string such as ``"ng"``, ``"poisson"`` or ``"nb:5"``.

    Parameters
    ----------
    spec : str or PowerSeriesFamily
        Name or alias, optionally followed by ``:shape``.  Binomial and
        negative binomial require a shape; the others reject one.

    Raises
    ------
    ValueError
        Unknown name or bad shape.
    """
    if isinstance(spec, PowerSeriesFamily):
        return spec
    text = str(spec).strip().lower()
    name, _, shape = text.partition(":")
    canonical = _ALIASES.get(name)
    if canonical is None:
        raise ValueError(f"unknown power-series family {spec!r}")
    if canonical in ("binomial", "negbinomial"):
        if not shape:
            raise ValueError(f"family {canonical!r} needs a shape, e.g. '{name}:3'")
        try:
            value = int(shape)
        except ValueError:
            raise ValueError(f"bad shape in family spec {spec!r}") from None
        return Binomial(value) if canonical == "binomial" else NegativeBinomial(value)
    if shape:
        raise ValueError(f"family {canonical!r} takes no shape (got {spec!r})")
    return {"geometric": Geometric, "poisson": Poisson, "logarithmic": Logarithmic}[canonical]()


# -- pmf, truncation tables and sampling ------------------------------------


def log_pmf(family: PowerSeriesFamily, theta: float, n) -> np.ndarray:
    family.check_proper(theta)
    n = np.asarray(n)
    with np.errstate(invalid="ignore"):
        out = family.log_coef(n) + n * math.log(theta) - math.log(family.C(theta))
    return np.where(np.isfinite(family.log_coef(n)), out, -np.inf)


def pmf(family: PowerSeriesFamily, theta: float, n):
    """
    ``P(N = n) = a_n theta^n / C(theta)``.

    Raises :class:`DomainError` unless ``theta`` is in the proper domain.
    Returns 0 where ``a_n = 0`` (including ``n < 1``).
    """
    return np.exp(log_pmf(family, theta, n))


def pmf_table(family: PowerSeriesFamily, theta: float, tol: float = 1e-12, power: int = 0):
    """
    Mass function on ``n = 1..M`` with ``M`` the smallest index such that
    ``sum_{n > M} n**power * P(N = n) < tol``.

    Returns
    -------
    n : ndarray of int
    p : ndarray of float

    Raises
    ------
    SeriesTruncationError
        If ``M`` would exceed :func:`max_series_terms`.
    """
    family.check_proper(theta)
    if tol <= 0:
        raise ValueError("tol must be positive")
    cap = max_series_terms()
    if family.max_support is not None:
        n = np.arange(1, family.max_support + 1)
        return n, pmf(family, theta, n)

    # E(N^power) from the closed forms; the tail is what is left over
    C = float(family.C(theta))
    if power == 0:
        total = 1.0
    elif power == 1:
        total = theta * float(family.dC(theta)) / C
    elif power == 2:
        total = (theta * float(family.dC(theta)) + theta**2 * float(family.d2C(theta))) / C
    else:
        raise ValueError("power must be 0, 1 or 2")

    size = 64
    while True:
        size = min(size, cap)
        n = np.arange(1, size + 1)
        p = pmf(family, theta, n)
        w = p * n.astype(float) ** power
        tail = total - np.cumsum(w)
        # the closed-form total carries rounding error of a few ulps
        hits = np.nonzero(tail < max(tol, 64 * np.finfo(float).eps * total))[0]
        if hits.size:
            m = hits[0] + 1
            return n[:m], p[:m]
        if size >= cap:
            raise SeriesTruncationError(
                f"{family.spec} theta={theta}: tail {tail[-1]:.3g} >= {tol:.3g} after {cap} terms"
            )
        size *= 4


def sample_n(family: PowerSeriesFamily, theta: float, rng=None, size=None):
    """
    Draw ``N`` by inverting its cdf on a truncated table.

    The table stops at tail mass ``1e-12`` and is renormalised.

    Parameters
    ----------
    rng : numpy.random.Generator, int or None
        Caller-owned generator (or seed).
    size : int or tuple, optional
        Output shape; ``None`` returns a Python ``int``.
    """
    rng = np.random.default_rng(rng)
    n, p = pmf_table(family, theta, 1e-12)
    cdf = np.cumsum(p)
    u = rng.random(size)
    idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(n) - 1)
    out = n[idx]
    return int(out) if size is None else out
