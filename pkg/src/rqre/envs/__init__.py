"""Environments: matrix games, the grid Stag Hunt and exactly linear synthetic games."""

from .base import OUTCOMES, Env, EnvSpec, GenerativeEnv
from .grid_stag_hunt import GridStagHunt, dynamic_stag_hunt, grid_features
from .matrix_game import (
    MatrixGame,
    coordination_payoffs,
    matrix_game,
    parse_payoff_file,
    stag_hunt,
    stag_hunt_payoffs,
    write_payoff_file,
)
from .synthetic import ConstructionError, SyntheticLinearMG, linear_bandit, synthetic_linear_mg

__all__ = [
    "OUTCOMES",
    "ConstructionError",
    "Env",
    "EnvSpec",
    "GenerativeEnv",
    "GridStagHunt",
    "MatrixGame",
    "SyntheticLinearMG",
    "coordination_payoffs",
    "dynamic_stag_hunt",
    "grid_features",
    "linear_bandit",
    "matrix_game",
    "parse_payoff_file",
    "stag_hunt",
    "stag_hunt_payoffs",
    "synthetic_linear_mg",
    "write_payoff_file",
]
