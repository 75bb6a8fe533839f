"""
Likelihood inference for NPS models.

The log-likelihood of an i.i.d. sample is

.. math::
    \\ell = n\\log\\theta - n\\log\\sigma - \\tfrac{n}{2}\\log 2\\pi
            - \\tfrac12\\sum z_i^2 + \\sum\\log C'(\\theta\\Phi(z_i))
            - n\\log C(\\theta).

Two fitting routes are offered.  :func:`fit_direct` maximises it with a
quasi-Newton method on transformed parameters followed by Newton polishing.
:func:`fit_em` treats the count ``N`` behind each observation as missing and
runs an expectation / conditional-maximisation (ECM) scheme, with standard
errors from Louis' missing-information identity (:func:`louis_information`).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special
from scipy.stats import norm

from .core import NpsModel
from .oracle import fd_hess
from .power_series import DomainError, Interval, PowerSeriesFamily, get_family

FIT_METHODS = ("direct", "em", "closed-form")


class ConvergenceError(RuntimeError):
    """An M-step root solve failed."""


@dataclass(frozen=True)
class Psi:
    """Parameter vector ``(mu, sigma, theta)``."""

    mu: float
    sigma: float
    theta: float

    def __post_init__(self):
        for name in ("mu", "sigma", "theta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma, self.theta])

    @classmethod
    def from_array(cls, a) -> "Psi":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class FitConfig:
    """
    Options shared by the fitting routines.

    Attributes
    ----------
    extended : bool
        Let the direct fit search the extended ``theta`` domain.  EM always
        uses the proper domain.
    theta_starts : tuple of float, optional
        Override the default multi-start grid.
    rtol, ptol : float
        EM stops once the relative log-likelihood change is below ``rtol``
        and the step in ``(mu / sigma, log sigma, u(theta))`` is below ``ptol``.
        The likelihood test alone stops early on flat ridges.
    """

    extended: bool = False
    theta_starts: Optional[Tuple[float, ...]] = None
    max_iter_em: int = 500
    max_iter_qn: int = 200
    rtol: float = 1e-8
    ptol: float = 1e-7
    min_n: int = 10
    accelerate: bool = True

    def __post_init__(self):
        if not (self.rtol > 0 and self.ptol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter_em < 1 or self.max_iter_qn < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class FitResult:
    """Outcome of a fit; JSON round-trips through :meth:`to_dict`/:meth:`from_dict`."""

    family: str
    psi_hat: Psi
    loglik: float
    aic: float
    bic: float
    cov: List[List[float]]
    se: List[float]
    method: str
    iterations: int
    converged: bool
    trace: List[Tuple[int, float]] = field(default_factory=list)
    n: int = 0
    k: int = 3
    boundary: bool = False
    info_source: str = ""
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["psi_hat"] = asdict(self.psi_hat)
        d["trace"] = [[int(i), float(v)] for i, v in self.trace]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        d = dict(d)
        d["psi_hat"] = Psi(**d["psi_hat"])
        d["trace"] = [(int(i), float(v)) for i, v in d["trace"]]
        return cls(**d)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def confidence_intervals(self, level: float = 0.95) -> List[Tuple[float, float]]:
        """Wald intervals ``psi_r +- z_{gamma/2} se_r``."""
        if not 0 < level < 1:
            raise ValueError("level must lie in (0, 1)")
        q = norm.ppf(0.5 + level / 2)
        est = [self.psi_hat.mu, self.psi_hat.sigma, self.psi_hat.theta][: len(self.se)]
        return [(e - q * s, e + q * s) for e, s in zip(est, self.se)]


@dataclass(frozen=True)
class LatentPosterior:
    """``E(N | y_i)`` and ``Var(N | y_i)`` for each observation."""

    ez: np.ndarray
    varz: np.ndarray


def _info_criteria(loglik: float, k: int, n: int) -> Tuple[float, float]:
    return 2 * k - 2 * loglik, k * math.log(n) - 2 * loglik


def _as_data(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("data must be nonempty")
    if not np.all(np.isfinite(y)):
        raise ValueError("data contain non-finite values")
    return y


def _psi(psi) -> Psi:
    return psi if isinstance(psi, Psi) else Psi(*psi)


# -- likelihood and derivatives ---------------------------------------------


def loglik(family, psi, data) -> float:
    """Total log-likelihood; ``-inf`` when ``psi`` is outside the model."""
    fam = get_family(family)
    y = _as_data(data)
    try:
        p = _psi(psi)
        if p.theta == 0.0:
            return -math.inf
        model = NpsModel(fam, p.mu, p.sigma, p.theta)
        with np.errstate(all="ignore"):
            value = float(np.sum(model.logpdf(y)))
    except (DomainError, OverflowError):
        return -math.inf
    return value if math.isfinite(value) else -math.inf


class _Pieces:
    # shared per-observation quantities for score / information
    def __init__(self, fam: PowerSeriesFamily, psi: Psi, y: np.ndarray):
        self.n = y.size
        self.mu, self.sigma, self.theta = psi.mu, psi.sigma, psi.theta
        th = self.theta
        self.z = (y - self.mu) / self.sigma
        self.phi = norm.pdf(self.z)
        self.Phi = special.ndtr(self.z)
        x = th * self.Phi
        self.c1, self.c2, self.c3 = fam.dC(x), fam.d2C(x), fam.d3C(x)
        self.g1 = self.c2 / self.c1
        self.g2 = self.c3 / self.c1 - self.g1**2
        C, dC, d2C = float(fam.C(th)), float(fam.dC(th)), float(fam.d2C(th))
        self.r1 = dC / C
        self.r2 = (d2C * C - dC * dC) / (C * C)
        # d/dz of the per-observation loglik and its z- and theta-derivatives
        self.h = -self.z + th * self.phi * self.g1
        self.hz = -1.0 - th * self.z * self.phi * self.g1 + th**2 * self.phi**2 * self.g2
        self.ht = self.phi * self.g1 + th * self.phi * self.Phi * self.g2


def score(family, psi, data) -> np.ndarray:
    """Gradient ``(dl/dmu, dl/dsigma, dl/dtheta)``."""
    p = _Pieces(get_family(family), _psi(psi), _as_data(data))
    s = p.sigma
    return np.array([
        -np.sum(p.h) / s,
        np.sum(-1.0 - p.z * p.h) / s,
        p.n / p.theta + np.sum(p.Phi * p.g1) - p.n * p.r1,
    ])


def _hessian(p: _Pieces) -> np.ndarray:
    s, z = p.sigma, p.z
    H = np.empty((3, 3))
    H[0, 0] = np.sum(p.hz) / s**2
    H[0, 1] = np.sum(p.h + z * p.hz) / s**2
    H[1, 1] = np.sum(1.0 + 2 * z * p.h + z**2 * p.hz) / s**2
    H[0, 2] = -np.sum(p.ht) / s
    H[1, 2] = -np.sum(z * p.ht) / s
    H[2, 2] = -p.n / p.theta**2 + np.sum(p.Phi**2 * p.g2) - p.n * p.r2
    H[1, 0], H[2, 0], H[2, 1] = H[0, 1], H[0, 2], H[1, 2]
    return H


def _printed_information(p: _Pieces) -> np.ndarray:
    # observed information exactly as typeset in the source derivation,
    # kept for the discrepancy report
    s, th, z, phi, Phi = p.sigma, p.theta, p.z, p.phi, p.Phi
    c1, c2, c3, n = p.c1, p.c2, p.c3, p.n
    C2 = c1**2
    I_mm = -n / s**2 - th / s**2 * np.sum(((z * phi * c2 - th * c3 * phi**2) * c1 + th * c2**2 * phi**2) / C2)
    I_ms = (
        -2 / s**2 * np.sum(z)
        + th / s**2 * np.sum(phi * c2 / c1)
        - th / s**2 * np.sum(((z**2 * phi * c2 - th * z * phi**2 * c3) * c1 + th * z * phi**2 * c2**2) / C2)
    )
    I_mt = -1 / s * np.sum(phi * c2 / c1) - th / s * np.sum((Phi * phi * c3 * c1 - Phi * phi * c2**2) / C2)
    I_ss = (
        n / s**2
        - 3 / s**2 * np.sum(z**2)
        + th / s**2 * np.sum(z * phi * c2 / c1)
        + th / s**2 * np.sum(((z**3 * phi - z * phi) * c2 - th * z**2 * phi**2 * c3) * c1 / C2)
        - th**2 / s**2 * np.sum(z**2 * phi**2 * c2**2 / C2)
    )
    I_st = -1 / s**2 * np.sum(z * phi * c2 / c1) - th / s * np.sum((z * phi * Phi * c1 * c3 - z * phi * Phi * c2**2) / C2)
    I_tt = -n / th**2 + np.sum((Phi**2 * c3 * c1 - Phi**2 * c2**2) / C2) - n * (p.r2 + p.r1**2) + n * p.r1**2
    return -np.array([[I_mm, I_ms, I_mt], [I_ms, I_ss, I_st], [I_mt, I_st, I_tt]])


def _fd_steps(fam: PowerSeriesFamily, psi: Psi) -> np.ndarray:
    th = psi.theta
    room = min(abs(th - iv.lo) if math.isfinite(iv.lo) else math.inf for iv in fam.extended_domain if th in iv)
    room = min(room, min(abs(iv.hi - th) for iv in fam.extended_domain if th in iv))
    return np.array([1e-4 * psi.sigma, 1e-4 * psi.sigma, min(1e-4 * max(1.0, abs(th)), room / 10)])


def fd_information(family, psi, data) -> np.ndarray:
    """Minus the finite-difference Hessian of :func:`loglik`."""
    fam, p, y = get_family(family), _psi(psi), _as_data(data)
    f = lambda v: loglik(fam, Psi(*v), y)
    return -fd_hess(f, p.as_array(), _fd_steps(fam, p))


@dataclass(frozen=True)
class InfoReport:
    """Observed information three ways, with relative gaps to the FD matrix."""

    analytic: np.ndarray
    printed: np.ndarray
    fd: np.ndarray
    gap_analytic: float
    gap_printed: float
    authoritative: str

    @property
    def matrix(self) -> np.ndarray:
        return self.analytic if self.authoritative == "analytic" else self.fd

    def lines(self) -> List[str]:
        names = ("mu", "sigma", "theta")
        out = []
        for i in range(3):
            for j in range(i, 3):
                a, pr, f = self.analytic[i, j], self.printed[i, j], self.fd[i, j]
                out.append(
                    f"entry=I_{names[i]}{names[j]} analytic={a:.10g} printed={pr:.10g} fd={f:.10g} "
                    f"rel_gap_analytic={_rel(a, f):.3g} rel_gap_printed={_rel(pr, f):.3g} "
                    f"status={'ok' if _rel(a, f) < 1e-3 else 'discrepancy'}"
                )
        return out


def _rel(a, b, floor: float = 0.0) -> float:
    return float(abs(a - b) / max(abs(b), floor, 1e-300))


def _max_rel_gap(A: np.ndarray, B: np.ndarray, n: int) -> float:
    # entries tinier than 1e-6 n are compared absolutely against that floor
    floor = 1e-6 * n
    return max(_rel(A[i, j], B[i, j], floor) for i in range(3) for j in range(3))


def observed_info(family, psi, data, form: str = "analytic") -> np.ndarray:
    """
    Observed information ``-d2l/dpsi2``.

    ``form`` is ``"analytic"`` (independently derived second derivatives),
    ``"printed"`` (published transcription), ``"fd"`` (finite differences of
    the log-likelihood) or ``"auto"`` (analytic if it matches FD within
    relative 1e-3, else FD).
    """
    fam, p, y = get_family(family), _psi(psi), _as_data(data)
    if form == "analytic":
        return -_hessian(_Pieces(fam, p, y))
    if form == "printed":
        return _printed_information(_Pieces(fam, p, y))
    if form == "fd":
        return fd_information(fam, p, y)
    if form == "auto":
        return info_report(fam, p, y).matrix
    raise ValueError(f"unknown information form {form!r}")


def info_report(family, psi, data) -> InfoReport:
    fam, p, y = get_family(family), _psi(psi), _as_data(data)
    pieces = _Pieces(fam, p, y)
    A = -_hessian(pieces)
    P = _printed_information(pieces)
    F = fd_information(fam, p, y)
    ga, gp = _max_rel_gap(A, F, y.size), _max_rel_gap(P, F, y.size)
    return InfoReport(A, P, F, ga, gp, "analytic" if ga < 1e-3 else "fd")


def _covariance(info: np.ndarray) -> Tuple[np.ndarray, bool]:
    try:
        L = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return np.full_like(info, np.nan), False
    inv = np.linalg.inv(L)
    return inv.T @ inv, True


# -- direct maximisation -----------------------------------------------------


class _ThetaMap:
    # smooth bijection from the real line onto one open theta interval
    def __init__(self, iv: Interval, cap: float):
        self.lo, self.hi = iv.lo, iv.hi
        self.kind = (math.isfinite(self.lo), math.isfinite(self.hi))
        if self.kind == (True, True):
            self.bounds = (-30.0, 30.0)
        elif self.kind == (True, False):
            self.bounds = (-40.0, math.log(cap - self.lo))
        else:
            self.bounds = (-40.0, math.log(cap + self.hi))

    def forward(self, u: float) -> float:
        if self.kind == (True, True):
            return self.lo + (self.hi - self.lo) * special.expit(u)
        if self.kind == (True, False):
            return self.lo + math.exp(u)
        return self.hi - math.exp(u)

    def jac(self, th: float) -> float:
        if self.kind == (True, True):
            return (th - self.lo) * (self.hi - th) / (self.hi - self.lo)
        if self.kind == (True, False):
            return th - self.lo
        return th - self.hi

    def inverse(self, th: float) -> float:
        if self.kind == (True, True):
            return float(special.logit((th - self.lo) / (self.hi - self.lo)))
        if self.kind == (True, False):
            return math.log(th - self.lo)
        return math.log(self.hi - th)


def _theta_cap(fam: PowerSeriesFamily) -> float:
    # keeps C(theta) and its derivatives finite in double precision
    return 500.0 if fam.name == "poisson" else 1e4


def default_theta_starts(iv: Interval) -> Tuple[float, ...]:
    """Multi-start grid for one theta interval."""
    if math.isfinite(iv.lo) and math.isfinite(iv.hi):
        return tuple(iv.lo + f * iv.width for f in (0.2, 0.5, 0.8))
    if math.isfinite(iv.lo):
        return tuple(iv.lo + v for v in (0.5, 1.0, 3.0))
    return tuple(iv.hi - v for v in (0.5, 1.0, 3.0))


def _fit_domains(fam: PowerSeriesFamily, extended: bool) -> Tuple[Interval, ...]:
    return fam.extended_domain if extended else (fam.proper_domain,)


def _starts(fam, config: FitConfig, domains) -> List[Tuple[Interval, float]]:
    out = []
    for iv in domains:
        grid = config.theta_starts if config.theta_starts is not None else default_theta_starts(iv)
        out.extend((iv, t) for t in grid if t in iv)
    if not out:
        raise DomainError("no theta start lies in the fit domain")
    return out


def _check_n(y: np.ndarray, config: FitConfig):
    if y.size < config.min_n:
        raise ValueError(f"need at least {config.min_n} observations, got {y.size}")


def _qn_run(fam, y, iv: Interval, theta0: float, mu0: float, sigma0: float, config: FitConfig):
    tmap = _ThetaMap(iv, _theta_cap(fam))
    n = y.size

    def unpack(v):
        return Psi(v[0], math.exp(v[1]), tmap.forward(v[2]))

    def objective(v):
        p = unpack(v)
        if not p.theta in iv:
            return 1e300, np.zeros(3)
        ll = loglik(fam, p, y)
        if not math.isfinite(ll):
            return 1e300, np.zeros(3)
        g = score(fam, p, y)
        grad = -np.array([g[0], g[1] * p.sigma, g[2] * tmap.jac(p.theta)]) / n
        return -ll / n, grad

    v0 = np.array([mu0, math.log(sigma0), tmap.inverse(theta0)])
    bounds = [(None, None), (None, None), tmap.bounds]
    res = optimize.minimize(objective, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options=dict(maxiter=config.max_iter_qn, ftol=1e-15, gtol=1e-10))
    psi = unpack(res.x)
    at_bound = min(abs(res.x[2] - b) for b in tmap.bounds) < 1e-6 or _near_end(psi.theta, iv)
    return psi, -res.fun * n, int(res.nit), at_bound


def _near_end(theta: float, iv: Interval, rel: float = 1e-8) -> bool:
    scale = iv.width if math.isfinite(iv.width) else max(1.0, abs(theta))
    return any(math.isfinite(e) and abs(theta - e) < rel * scale for e in (iv.lo, iv.hi))


def _newton_polish(fam, y, psi: Psi, iv: Interval, max_iter: int = 30) -> Tuple[Psi, int]:
    ll = loglik(fam, psi, y)
    for it in range(max_iter):
        g = score(fam, psi, y)
        if np.max(np.abs(g)) < 1e-9 * y.size:
            return psi, it
        H = _hessian(_Pieces(fam, psi, y))
        try:
            np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            return psi, it
        step = np.linalg.solve(-H, g)
        t = 1.0
        while t > 1e-6:
            cand = psi.as_array() + t * step
            if cand[1] > 0 and cand[2] in iv:
                new = Psi.from_array(cand)
                ll_new = loglik(fam, new, y)
                if ll_new >= ll - 1e-12 * abs(ll):
                    break
            t /= 2
        else:
            return psi, it
        psi, ll = new, ll_new
    return psi, max_iter


def _finish(fam, y, psi: Psi, method: str, iterations: int, trace, boundary: bool, message: str = "",
            info: Optional[np.ndarray] = None, info_source: str = "") -> FitResult:
    n = y.size
    ll = loglik(fam, psi, y)
    aic, bic = _info_criteria(ll, 3, n)
    if info is None:
        rep = info_report(fam, psi, y)
        info, info_source = rep.matrix, rep.authoritative
    cov, ok = _covariance(info)
    g = score(fam, psi, y)
    stationary = bool(np.max(np.abs(g)) < 1e-6 * n)
    converged = stationary and ok and not boundary
    if not converged and not message:
        message = "theta at domain boundary" if boundary else (
            "information not positive definite" if not ok else "score not zero at optimum")
    se = [float(math.sqrt(v)) if v >= 0 else math.nan for v in np.diag(cov)]
    return FitResult(fam.spec, psi, ll, aic, bic, cov.tolist(), se, method, iterations, converged,
                     list(trace), n, 3, boundary, info_source, message)


def fit_direct(family, data, config: FitConfig = FitConfig()) -> FitResult:
    """
    Maximum likelihood by L-BFGS-B on ``(mu, log sigma, u)`` with ``theta`` a
    smooth function of ``u`` on each domain interval, multi-started over a
    ``theta`` grid, then Newton steps with the analytic Hessian.
    """
    fam, y = get_family(family), _as_data(data)
    _check_n(y, config)
    mu0, sd0 = float(np.mean(y)), float(np.std(y, ddof=1))
    best = None
    for iv, t0 in _starts(fam, config, _fit_domains(fam, config.extended)):
        try:
            psi, ll, nit, at_bound = _qn_run(fam, y, iv, t0, mu0, sd0, config)
        except (DomainError, OverflowError, FloatingPointError):
            continue
        if best is None or ll > best[1]:
            best = (psi, ll, nit, at_bound, iv)
    if best is None:
        raise ConvergenceError("direct fit failed from every start")
    psi, ll, nit, at_bound, iv = best
    extra = 0
    if not at_bound:
        psi, extra = _newton_polish(fam, y, psi, iv)
    trace = [(0, loglik(fam, psi, y))]
    return _finish(fam, y, psi, "direct", nit + extra, trace, at_bound)


# -- EM -----------------------------------------------------------------------


def _mills(w):
    # phi(w) / Phi(w), stable for very negative w
    return np.exp(norm.logpdf(w) - special.log_ndtr(w))


def e_step(family, psi, data) -> LatentPosterior:
    """
    Posterior mean and variance of the latent count given each observation::

        E(N | y)   = 1 + x C''(x) / C'(x)
        Var(N | y) = (C'(x) + 3 x C''(x) + x^2 C'''(x)) / C'(x) - E(N | y)^2

    with ``x = theta Phi((y - mu) / sigma)``.
    """
    fam, p, y = get_family(family), _psi(psi), _as_data(data)
    fam.check_proper(p.theta)
    x = p.theta * special.ndtr((y - p.mu) / p.sigma)
    c1, c2, c3 = fam.dC(x), fam.d2C(x), fam.d3C(x)
    a = x * c2 / c1
    b = x * x * c3 / c1
    ez = 1.0 + a
    # E(N^2) - E(N)^2 rearranged to avoid cancelling the leading 1
    varz = np.maximum(a + b - a * a, 0.0)
    return LatentPosterior(ez, varz)


def _safeguarded_newton(f, df, x0: float, step: float, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Root of a decreasing function: Newton steps kept inside an expanding bracket."""
    lo, hi = x0 - step, x0 + step
    flo, fhi = f(lo), f(hi)
    k = 0
    while flo < 0:
        lo, flo = lo - step * 2**k, f(lo - step * 2**k)
        k += 1
        if k > 60:
            raise ConvergenceError("could not bracket M-step root from below")
    k = 0
    while fhi > 0:
        hi, fhi = hi + step * 2**k, f(hi + step * 2**k)
        k += 1
        if k > 60:
            raise ConvergenceError("could not bracket M-step root from above")
    x = min(max(x0, lo), hi)
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0:
            return x
        if fx > 0:
            lo = x
        else:
            hi = x
        d = df(x)
        xn = x - fx / d if d < 0 else math.nan
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol * (1.0 + abs(x)) or hi - lo <= tol * (1.0 + abs(x)):
            return xn
        x = xn
    raise ConvergenceError("M-step root solve did not converge")


def _m_mu(y, sigma, w1, mu0):
    # Q(mu) = -sum (y-mu)^2 / (2 sigma^2) + sum (z-1) log Phi((y-mu)/sigma), concave
    n = y.size

    def f(mu):
        w = (y - mu) / sigma
        return np.sum(y - mu) / sigma - np.sum(w1 * _mills(w))

    def df(mu):
        w = (y - mu) / sigma
        r = _mills(w)
        return -n / sigma - np.sum(w1 * r * (w + r)) / sigma

    return _safeguarded_newton(f, df, mu0, sigma)


def _m_sigma(y, mu, w1, sigma0):
    # concave in tau = 1/sigma; solved for eta = log tau
    n = y.size
    d = y - mu
    S = float(np.sum(d * d))

    def f(eta):
        tau = math.exp(eta)
        return n - tau * tau * S + tau * np.sum(w1 * d * _mills(tau * d))

    def df(eta):
        tau = math.exp(eta)
        r = _mills(tau * d)
        w = tau * d
        return -2 * tau * tau * S + np.sum(w1 * (w * r - w * w * r * (w + r)))

    eta = _safeguarded_newton(f, df, -math.log(sigma0), 0.5)
    return math.exp(-eta)


def _m_theta(fam: PowerSeriesFamily, zbar: float) -> Tuple[float, bool]:
    # root of theta C'(theta) / C(theta) = zbar, increasing in theta
    tmap = _ThetaMap(fam.proper_domain, _theta_cap(fam))
    g = lambda u: fam.mean_n(tmap.forward(u)) - zbar
    lo, hi = tmap.bounds
    glo, ghi = g(lo), g(hi)
    if glo >= 0:
        return tmap.forward(lo), True
    if ghi <= 0:
        return tmap.forward(hi), True
    u = optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return tmap.forward(u), False


def _ecm_step(fam, y, psi: Psi) -> Tuple[Psi, bool]:
    post = e_step(fam, psi, y)
    w1 = post.ez - 1.0
    mu = _m_mu(y, psi.sigma, w1, psi.mu)
    sigma = _m_sigma(y, mu, w1, psi.sigma)
    theta, hit = _m_theta(fam, float(np.mean(post.ez)))
    return Psi(mu, sigma, theta), hit


def _em_run(fam, y, psi: Psi, config: FitConfig):
    tmap = _ThetaMap(fam.proper_domain, _theta_cap(fam))
    to_v = lambda p: np.array([p.mu, math.log(p.sigma), tmap.inverse(p.theta)])
    from_v = lambda v: Psi(v[0], math.exp(v[1]), tmap.forward(v[2]))
    ll = loglik(fam, psi, y)
    trace = [(0, ll)]
    converged, boundary = False, False
    it = 0
    while it < config.max_iter_em:
        it += 1
        p1, hit = _ecm_step(fam, y, psi)
        if config.accelerate and not hit:
            new, hit = _squarem(fam, y, psi, p1, to_v, from_v)
        else:
            new = p1
        ll_new = loglik(fam, new, y)
        boundary = hit
        if ll_new < ll - 1e-10 * max(1.0, abs(ll)):
            raise ConvergenceError(f"EM log-likelihood decreased at iteration {it}")
        delta = abs(ll_new - ll)
        step = np.abs(to_v(new) - to_v(psi))
        step[0] /= psi.sigma
        psi, ll = new, ll_new
        trace.append((it, ll))
        if delta <= config.rtol * abs(ll) and step.max() <= config.ptol:
            converged = True
            break
        if delta <= config.rtol * abs(ll) and _near_end(psi.theta, fam.proper_domain):
            # drifting onto the edge of the domain; EM would crawl there indefinitely
            boundary = True
            break
    return psi, ll, it, trace, converged, boundary


def _squarem(fam, y, p0: Psi, p1: Psi, to_v, from_v):
    """
    One squared-extrapolation cycle on ``(mu, log sigma, u(theta))``.

    Two ECM steps give the direction; the extrapolated point is mapped
    through one more ECM step.  If that does not beat the plain double step
    the plain step is returned, so each cycle is at least as good as two EM
    iterations and the trace stays monotone.
    """
    p2, hit = _ecm_step(fam, y, p1)
    if hit:
        return p2, hit
    ll2 = loglik(fam, p2, y)
    v0, v1, v2 = to_v(p0), to_v(p1), to_v(p2)
    r = v1 - v0
    v = v2 - v1 - r
    nv = np.linalg.norm(v)
    if nv == 0:
        return p2, False
    alpha = min(-np.linalg.norm(r) / nv, -1.0)
    while alpha < -1.0:
        try:
            # wild candidates may give NaN; they fail the comparison below
            with np.errstate(all="ignore"):
                cand = from_v(v0 - 2 * alpha * r + alpha * alpha * v)
                out, hit = _ecm_step(fam, y, cand)
                better = not hit and loglik(fam, out, y) >= ll2
            if better:
                return out, False
        except (ConvergenceError, DomainError, OverflowError, FloatingPointError, ValueError):
            pass
        alpha = (alpha - 1.0) / 2.0
        if alpha > -1.01:
            break
    return p2, False


def fit_em(family, data, config: FitConfig = FitConfig(), start: Optional[Psi] = None) -> FitResult:
    """
    Expectation / conditional-maximisation fit on the proper ``theta`` domain.

    Each iteration computes ``E(N | y_i)``, then maximises the expected
    complete-data log-likelihood in ``mu`` (``sigma`` fixed), in ``sigma``
    (new ``mu``), and in ``theta`` by solving ``theta C'(theta)/C(theta) =
    mean E(N | y_i)``.  Iterations are accelerated by squared
    extrapolation with a monotone fallback (``config.accelerate=False``
    gives plain ECM).
    Standard errors come from :func:`louis_information`.
    """
    fam, y = get_family(family), _as_data(data)
    _check_n(y, config)
    if start is not None:
        start = _psi(start)
        fam.check_proper(start.theta)
        starts = [start]
    else:
        mu0, sd0 = float(np.mean(y)), float(np.std(y, ddof=1))
        starts = [Psi(mu0, sd0, t) for _, t in _starts(fam, config, (fam.proper_domain,))]
    best = None
    for s in starts:
        run = _em_run(fam, y, s, config)
        if best is None or run[1] > best[1]:
            best = run
    psi, ll, it, trace, converged, boundary = best
    info = louis_information(fam, psi, y)
    res = _finish(fam, y, psi, "em", it, trace, boundary, info=info, info_source="louis")
    if not converged:
        res.converged = False
        if boundary:
            res.boundary = True
            res.message = "theta at domain boundary"
        else:
            res.message = res.message or f"no convergence in {config.max_iter_em} iterations"
    elif not res.converged and not boundary and np.all(np.isfinite(res.se)):
        # EM's own stopping rule was met; a score slightly above the direct
        # fit's certificate threshold is not a failure of the algorithm
        res.converged, res.message = True, ""
    return res


# -- Louis standard errors ---------------------------------------------------


def louis_components(family, psi, data, printed: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``(l_c, l_m)``: conditional expectation of the complete-data information
    and conditional covariance of the complete-data score, given ``y``.

    ``printed=True`` uses the published ``c11``, ``c12``, ``c22`` entries
    as typeset (for the discrepancy report); ``l_m`` has no variants.
    """
    fam, p, y = get_family(family), _psi(psi), _as_data(data)
    post = e_step(fam, p, y)
    mu, s, th, n = p.mu, p.sigma, p.theta, y.size
    d = y - mu
    w = d / s
    r = _mills(w)
    e1, vz = post.ez - 1.0, post.varz
    C, dC, d2C = float(fam.C(th)), float(fam.dC(th)), float(fam.d2C(th))
    lc = np.zeros((3, 3))
    if printed:
        lc[0, 0] = n / s**2 + np.sum(e1 * w * (r + r * r)) / s**2
        lc[0, 1] = 2 * np.sum(d) / s**3 - np.sum(e1 * d * r) / s**2 + np.sum(e1 * (w * w * r - w * r * r)) / s**2
        lc[1, 1] = (-n / s**2 + 3 * np.sum(d * d) / s**4 - 2 * np.sum(e1 * d * r) / s**3
                    + np.sum(e1 * d * (w * w * r - w * r * r)) / s**3)
    else:
        lc[0, 0] = n / s**2 + np.sum(e1 * (w * r + r * r)) / s**2
        lc[0, 1] = 2 * np.sum(d) / s**3 + np.sum(e1 * (w * w * r + w * r * r - r)) / s**2
        lc[1, 1] = -n / s**2 + 3 * np.sum(d * d) / s**4 + np.sum(e1 * (w**3 * r + w * w * r * r - 2 * w * r)) / s**2
    lc[2, 2] = np.sum(post.ez) / th**2 + n * (d2C * C - dC * dC) / C**2
    lc[1, 0] = lc[0, 1]
    lm = np.empty((3, 3))
    a = r / s           # d score_mu / d(z-1), up to sign
    b = d * r / s**2    # same for sigma
    c = 1.0 / th
    lm[0, 0] = np.sum(a * a * vz)
    lm[1, 1] = np.sum(b * b * vz)
    lm[2, 2] = np.sum(c * c * vz)
    lm[0, 1] = lm[1, 0] = np.sum(a * b * vz)
    lm[0, 2] = lm[2, 0] = -np.sum(a * c * vz)
    lm[1, 2] = lm[2, 1] = -np.sum(b * c * vz)
    return lc, lm


def louis_information(family, psi, data, printed: bool = False) -> np.ndarray:
    """Observed information ``l_c - l_m`` (missing-information principle)."""
    lc, lm = louis_components(family, psi, data, printed)
    return lc - lm


def louis_se(family, psi_hat, data) -> Tuple[np.ndarray, np.ndarray]:
    """Louis information matrix and the standard errors from its inverse."""
    info = louis_information(family, psi_hat, data)
    cov, ok = _covariance(info)
    if not ok:
        raise np.linalg.LinAlgError("Louis information is not positive definite")
    return info, np.sqrt(np.diag(cov))


# -- normal baseline and comparison ------------------------------------------


def fit_normal(data) -> FitResult:
    """Closed-form normal MLE (``k = 2``); ``theta`` is reported as NaN."""
    y = _as_data(data)
    n = y.size
    mu = float(np.mean(y))
    var = float(np.mean((y - mu) ** 2))
    if not var > 0:
        raise ValueError("normal fit needs non-constant data")
    sigma = math.sqrt(var)
    ll = -0.5 * n * (math.log(2 * math.pi * var) + 1.0)
    aic, bic = _info_criteria(ll, 2, n)
    cov = [[var / n, 0.0], [0.0, var / (2 * n)]]
    se = [math.sqrt(var / n), math.sqrt(var / (2 * n))]
    return FitResult("normal", Psi(mu, sigma, math.nan), ll, aic, bic, cov, se, "closed-form", 0, True,
                     [(0, ll)], n, 2, False, "closed-form", "")


@dataclass
class CompareRow:
    family: str
    fit: Optional[FitResult]
    error: str = ""


def compare(data, families: Iterable[str], method: str = "direct", config: FitConfig = FitConfig()) -> List[CompareRow]:
    """
    Fit each family (``"normal"`` is the closed-form baseline) and rank by
    AIC, ties broken by BIC.  Failed fits are kept at the end with their
    error message.
    """
    y = _as_data(data)
    rows = []
    for spec in families:
        spec = spec.strip()
        try:
            if spec.lower() == "normal":
                fit = fit_normal(y)
            else:
                fam = get_family(spec)
                fit = fit_em(fam, y, config) if method == "em" else fit_direct(fam, y, config)
            rows.append(CompareRow(fit.family, fit))
        except ValueError as exc:
            if "unknown power-series family" in str(exc) or "shape" in str(exc):
                raise
            rows.append(CompareRow(spec, None, str(exc)))
        except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            rows.append(CompareRow(spec, None, str(exc)))
    ok = sorted((r for r in rows if r.fit is not None), key=lambda r: (r.fit.aic, r.fit.bic))
    return ok + [r for r in rows if r.fit is None]


# -- simulation ----------------------------------------------------------------


@dataclass
class SimulationSummary:
    """Replicate averages in the layout of a simulation table."""

    family: str
    truth: Tuple[float, float, float]
    n: int
    replicates: int
    method: str
    mean_estimate: List[float]
    empirical_se: List[float]
    mean_se: List[float]
    mean_cov: List[List[float]]
    failures: int
    nonconverged: int

    def to_dict(self) -> dict:
        return asdict(self)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` (counter-based split of ``seed``)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def simulate(family, truth, n: int, replicates: int, seed: int = 0, method: str = "em",
             config: FitConfig = FitConfig()) -> SimulationSummary:
    """
    Draw ``replicates`` samples of size ``n`` from the NPS model ``truth`` and
    fit each one.  Replicates whose fit raises are counted as failures and
    excluded; non-converged fits are counted but kept.
    """
    fam = get_family(family)
    truth = _psi(truth)
    if n < 1 or replicates < 1:
        raise ValueError("n and replicates must be positive")
    if method not in ("em", "direct"):
        raise ValueError(f"unknown fit method {method!r}")
    model = NpsModel(fam, truth.mu, truth.sigma, truth.theta)
    est, ses, covs = [], [], []
    failures = nonconv = 0
    for i in range(replicates):
        y = model.sample_inverse(replicate_rng(seed, i), size=n)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_em(fam, y, config) if method == "em" else fit_direct(fam, y, config)
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError):
            failures += 1
            continue
        nonconv += not fit.converged
        est.append(fit.psi_hat.as_array())
        ses.append(fit.se)
        covs.append(np.asarray(fit.cov))
    if not est:
        raise ConvergenceError("every replicate failed")
    est = np.array(est)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_se = np.nanmean(np.array(ses, dtype=float), axis=0)
        mean_cov = np.nanmean(np.array(covs), axis=0)
    emp = est.std(axis=0, ddof=1) if len(est) > 1 else np.full(3, math.nan)
    return SimulationSummary(fam.spec, tuple(truth.as_array()), n, replicates, method,
                             est.mean(axis=0).tolist(), emp.tolist(), mean_se.tolist(),
                             mean_cov.tolist(), failures, nonconv)
