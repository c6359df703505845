"""Why a regularised equilibrium is a safer stage-game oracle than Nash.

The coordination family Q(alpha) has two pure equilibria whose ranking
flips at alpha = 1. A Nash selection jumps by 2 in l1 for an arbitrarily small
payoff change; the RQRE moves proportionally to the change.

Run: python3 demos/02_stability.py
"""

import numpy as np

from rqre.stability import alpha_sweep_ratio, format_table, nash_instability_demo
from rqre.stage_solver import SolverConfig

cfg = SolverConfig(epsilon=1.0, tau=0.0, tol=1e-12, max_iters=5000)
print(format_table(nash_instability_demo([0.1, 0.01, 0.001], cfg)))
ratio = alpha_sweep_ratio(cfg, np.linspace(0.9, 1.1, 201))
print(f"\nLargest ||pi(a) - pi(a')|| / |a - a'| over alpha in [0.9, 1.1]: {ratio:.3f}")
