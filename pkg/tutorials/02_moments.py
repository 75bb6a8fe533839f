"""
Moments four ways
=================

Quantile integration is the default; the series and the approximations are
useful cross-checks.
"""

from npsdist import NpsModel
from npsdist.moments import (
    OrthantSpec,
    approx_moments,
    mean_series,
    mgf_series,
    moments_quantile_integral,
    orthant_prob,
)
from npsdist.oracle import mc_moments

m = NpsModel("np", 0.0, 1.0, 1.0)

# E(Y^k) = integral over (0, 1) of quantile(u)^k, by adaptive quadrature
s = moments_quantile_integral(m)
print("quantile integral:", s.as_dict())

# Series over the latent count, each term an equicorrelated normal orthant
# probability
print("orthant P(X <= 0), dim 3, c = 1/2:", orthant_prob(OrthantSpec(3, 0.5)))
print("mean by series:", mean_series(m), "difference:", mean_series(m) - s.m1)
print("mgf at t=0.5:", mgf_series(m, 0.5))

# Linearising the normal quantile gives elementary closed forms, with a
# visible error
a = approx_moments(m, reference=s)
print("approximate mean:", a.m1, "gap to exact:", a.est_error)

# Monte Carlo with standard errors, for comparison
for rep in mc_moments(m, n_draws=200_000, seed=0)[:2]:
    print(rep.line())
