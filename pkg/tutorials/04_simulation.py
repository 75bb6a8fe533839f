"""
Simulation study and verification report
========================================

Replicates use independent random streams split from one master seed, so
results do not depend on the order the fits run in.
"""

import numpy as np

from npsdist.inference import simulate
from npsdist.oracle import verification_report

for n in (100, 300):
    s = simulate("np", (0.0, 1.0, 0.8), n=n, replicates=20, seed=7, method="direct")
    print(n, "mean", np.round(s.mean_estimate, 3), "empirical SE", np.round(s.empirical_se, 3),
          "non-converged", s.nonconverged)

# Oracles (quadrature, Monte Carlo, posterior sums, finite differences)
# against the closed forms.  The same report is `nps verify`.
for line in verification_report(seed=0, quick=True)[:12]:
    print(line)
