"""Learning the Stag Hunt RQRE from bandit feedback.

One-step game, one-hot joint-action features. Every episode the agents
solve the stage game on their optimistic estimates, play, and refit. The
exploitability of the executed profile against the true payoffs goes to zero.

Run: python3 demos/03_matrix_learning.py
"""

import numpy as np

from rqre.envs import stag_hunt
from rqre.linear_fa import OviHyper, value_cap
from rqre.ovi import TrainConfig, train
from rqre.stage_solver import SolverConfig

cfg = TrainConfig(
    episodes=2000,
    horizon=1,
    solver=SolverConfig(epsilon=1.0, tau=0.0, tol=1e-10),
    hyper=OviHyper(beta=0.1, B_clip=value_cap(1, (2, 2), 1.0), lam=1.0),
    update_frequency=1,
    reward_scale=4.0,
)
agents, log = train(stag_hunt(), cfg)
gap = log.column("exploitability")
for k in (1, 10, 100, 1000, 2000):
    print(f"episode {k:5d}: exploitability {gap[k - 1]:.2e}")
profile = agents.policies(np.ones((1, 1)), 0, bonus=False)[0]
print("learned profile (stag, hare):", np.round(profile[0][0], 4), np.round(profile[1][0], 4))
