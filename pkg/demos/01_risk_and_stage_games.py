"""Risk measures and one-shot stage games.

Walks through the entropic risk of a coin-flip loss, shows that it is not
positively homogeneous, then solves the matrix Stag Hunt for a few values of
the precision eps and the risk aversion tau.

Run: python3 demos/01_risk_and_stage_games.py
"""

import math

from rqre.risk import FiniteDistribution, RiskSpec, cvar, entropic_risk, homogeneity_gap
from rqre.stage_solver import SolverConfig, StagePayoff, rqre_solve

coin = FiniteDistribution([0.0, 1.0])
print("Loss Z is 0 or 1 with equal probability.")
for tau in (0.01, 1.0, 10.0):
    print(f"  entropic risk, tau={tau:<5}: {entropic_risk(coin, tau):.4f}")
print(f"  CVaR at alpha=0.5:        {cvar(coin, 0.5):.4f}")

two = entropic_risk(FiniteDistribution([0.0, 2.0]), 1.0)
print("\nScaling Z by 2 does not scale the entropic risk by 2:")
print(f"  rho(2Z) = log((1+e^2)/2) = {two:.5f}")
print(f"  2 rho(Z) = 2 log((1+e)/2) = {2 * math.log((1 + math.e) / 2):.5f}")
print(f"  gap = {homogeneity_gap(RiskSpec.entropic(1.0), coin):.5f}")

stag_hunt = StagePayoff.symmetric([[4.0, 0.0], [2.0, 2.0]])
print("\nStag Hunt (stag/stag pays 4, hare pays 2 regardless): probability of stag")
print("   eps   tau=0   tau=0.5   tau=2")
# small eps keeps the equilibrium unique; at larger eps several coexist
for eps in (0.25, 0.5, 1.0):
    row = []
    for tau in (0.0, 0.5, 2.0):
        profile, diag = rqre_solve(stag_hunt, SolverConfig(epsilon=eps, tau=tau, tol=1e-10, max_iters=2000))
        row.append(profile[0][0])
    print(f"  {eps:4.2f} " + "  ".join(f"{p:6.3f}" for p in row))
print("Raising tau makes each player hedge against the partner's randomness and shifts play to hare.")
