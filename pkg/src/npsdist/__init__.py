"""Normal power-series distributions: evaluation, moments and likelihood fitting."""

from .core import NpsModel, PrecisionWarning, limit_theta_zero_cdf
from .inference import FitConfig, FitResult, Psi, compare, fit_direct, fit_em, fit_normal, simulate
from .moments import MomentSummary, mean_series, moments_quantile_integral, moments_series
from .power_series import (
    Binomial,
    DomainError,
    Geometric,
    Logarithmic,
    NegativeBinomial,
    Poisson,
    PowerSeriesFamily,
    SeriesTruncationError,
    get_family,
    pmf,
    sample_n,
)

__version__ = "0.1.0"
