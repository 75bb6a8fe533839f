"""
Normal power-series distributions
=================================

An NPS variable is the maximum of ``N`` independent normal draws, where the
count ``N`` follows a zero-truncated power-series law (geometric, Poisson,
logarithmic, binomial or negative binomial).
"""

import numpy as np

from npsdist import NpsModel, limit_theta_zero_cdf

# A normal-geometric model.  The family can be an alias ("ng", "np", "nl",
# "nb:m", "nnb:k") or a PowerSeriesFamily instance.
m = NpsModel("ng", mu=0.0, sigma=1.0, theta=0.5)
print(m.family.spec, m.family.proper_domain)

y = np.linspace(-3, 3, 7)
print("pdf   ", np.round(m.pdf(y), 5))
print("cdf   ", np.round(m.cdf(y), 5))
print("hazard", np.round(m.hazard(y), 5))

# The quantile function has a closed form, so inverse-transform sampling
# is cheap and exact.
print("median", m.quantile(0.5))
draws = m.sample(np.random.default_rng(1), 100_000)
print("sample mean", draws.mean())

# In the proper domain the model really is a maximum of N normals, and the
# density is a mixture of order-statistic densities.
alt = m.sample_compound(np.random.default_rng(2), 100_000)
print("compound sample mean", alt.mean())
print("mixture pdf matches:", np.allclose(m.mixture_pdf(y), m.pdf(y), atol=1e-10))

# Negative theta lies outside the pmf domain but still gives a density;
# it skews the distribution to the left.
left = m.with_params(theta=-5.0)
print("theta=-5 mean of draws", left.sample(np.random.default_rng(3), 100_000).mean())

# As theta -> 0 the law tends to Phi(z)**c, c being the smallest count with
# positive mass (c = k for the negative binomial with shape k).
near = NpsModel("nnb:3", 0, 1, 1e-7)
print("limit gap", np.max(np.abs(near.cdf(y) - limit_theta_zero_cdf("nnb:3", 0, 1, y))))
