"""How much annual-loss dependence each construction actually delivers.

A Gaussian copula with parameter rho is placed on different layers of two
Poisson x Lognormal(1, 2) cells. Coupling only the counts leaves the
annual losses weakly dependent even at rho = 1, because the severities
dominate the heavy tail; coupling the annual losses directly transmits
rho almost fully.

    python demos/induced_dependence.py
"""

from oplda.deplib import dependence_study
from oplda.distlib import Lognormal, Poisson, RiskCell

cells = [RiskCell("z1", Poisson(5.0), Lognormal(1.0, 2.0)), RiskCell("z2", Poisson(10.0), Lognormal(1.0, 2.0))]
rhos = [0.0, 0.5, 1.0]
rows = dependence_study(cells, ["frequency_copula", "common_factor", "aggregate_copula"], rhos, 100_000, seed=5, threads=4)
for name, rho, est, se in rows:
    print(f"{name:<18s} rho={rho:<4g} Spearman {est:6.3f} +/- {se:.3f}")
