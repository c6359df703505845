"""The dynamic grid Stag Hunt.

Shows the board, the return of scripted stag and hare teams, and a short
training run. Full-length runs go through the CLI (`rqre train
configs/stag_hunt.cfg`); this script keeps to about a minute.

Run: python3 demos/05_grid_stag_hunt.py [episodes]
"""

import sys

import numpy as np

from rqre.envs import dynamic_stag_hunt
from rqre.envs.grid_stag_hunt import HARE, STAG
from rqre.evaluation import EvalConfig, GridScript, outcome_fractions, self_play
from rqre.linear_fa import OviHyper, value_cap
from rqre.ovi import TrainConfig, train
from rqre.stage_solver import SolverConfig

env = dynamic_stag_hunt(seed=0)
print(env.render(), "\n")

ev = EvalConfig(rollouts=20, deltas=(0.0,))
for name, targets in (("stag", (STAG, STAG)), ("hare", (HARE, HARE)), ("mixed", (STAG, HARE))):
    print(f"scripted {name:5s} team: return {self_play(GridScript(targets), env, ev)['mean']:.1f}")

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 100
eps = 200.0
cfg = TrainConfig(
    episodes=episodes,
    horizon=75,
    solver=SolverConfig(epsilon=eps, tau=0.005, tol=1e-6, max_iters=50),
    hyper=OviHyper(beta=0.1, B_clip=value_cap(75, (6, 6), eps), lam=1.0),
    reward_scale=4.0,
)
agents, log = train(env, cfg)
print(f"\ntrained {episodes} episodes, team return (moving average) {log.column('team_return_ma100')[-1]:.2f}")
counts = [int(log.column(c).sum()) for c in ("n_stag_stag", "n_hare_hare", "n_mixed")]
print("interactions during training (stag-stag, hare-hare, mixed):", counts)
fr = outcome_fractions(agents, env, ev)
print("bonus-free evaluation fractions:", None if fr is None else np.round(fr, 2))
