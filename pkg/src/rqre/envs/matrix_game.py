"""One-shot normal-form games as horizon-1 environments."""

from __future__ import annotations

import itertools
import math
from pathlib import Path

import numpy as np

from ..stage_solver import StagePayoff
from .base import EnvSpec, GenerativeEnv

STAG, HARE = 0, 1


def stag_hunt_payoffs() -> StagePayoff:
    """Mutual stag (4, 4), mutual hare (2, 2), stag against hare (0, 2)."""
    return StagePayoff.symmetric([[4.0, 0.0], [2.0, 2.0]])


def coordination_payoffs(alpha: float) -> StagePayoff:
    return StagePayoff.symmetric([[1.0, 0.0], [0.0, alpha]])


class MatrixGame(GenerativeEnv):
    """Single-state game repeated for ``horizon`` steps (1 by default).

    Features are the one-hot joint action, so ``d = prod |A_i|``.
    """

    def __init__(self, payoffs: StagePayoff, horizon: int = 1, seed: int = 0, name: str = "matrix"):
        self.payoffs = payoffs
        self.name = name
        counts = payoffs.action_counts
        self.d = int(np.prod(counts))
        t = payoffs.tensors
        self.spec = EnvSpec(
            n=payoffs.n,
            action_counts=tuple(counts),
            horizon=horizon,
            d=self.d,
            reward_range=(float(t.min()), float(t.max())),
            generative=True,
            obs_dim=1,
        )
        self._eye = np.eye(self.d).reshape(*counts, self.d)
        self._t = 0
        self._last = None

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._t = 0
        self._last = None
        return np.ones(1)

    def step(self, actions):
        actions = tuple(int(a) for a in actions)
        self._t += 1
        self._last = actions
        rewards = self.payoffs.tensors[(slice(None), *actions)].copy()
        return rewards, np.ones(1), self._t >= self.spec.horizon

    def joint_features(self, obs, h):
        obs = np.asarray(obs, float).reshape(-1, 1)
        return np.broadcast_to(self._eye, (obs.shape[0], *self._eye.shape)).copy()

    def kernel(self, obs, actions, h):
        return np.ones((1, 1)), np.ones(1)

    def mean_reward(self, obs, actions, h):
        return self.payoffs.tensors[(slice(None), *tuple(actions))].copy()

    def default_deviation(self) -> int:
        return HARE if self.name == "stag_hunt" else 0

    def outcome(self):
        if self.name != "stag_hunt" or self._last is None:
            return None
        a, b = self._last
        if a == b:
            return "stag-stag" if a == STAG else "hare-hare"
        return "mixed"


def matrix_game(payoffs: StagePayoff, horizon: int = 1, name: str = "matrix") -> MatrixGame:
    return MatrixGame(payoffs, horizon, name=name)


def stag_hunt(horizon: int = 1) -> MatrixGame:
    return MatrixGame(stag_hunt_payoffs(), horizon, name="stag_hunt")


def parse_payoff_file(path) -> StagePayoff:
    """Read the plain-text payoff format.

    First non-comment line ``players n``; an optional ``actions k_1 ... k_n``
    line; then, per player, ``prod k_i`` reals in row-major joint-action
    order (any whitespace layout). Without an ``actions`` line every player
    is assumed to have ``m^(1/n)`` actions, which must be an integer.
    """
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens or tokens[0][0] != "players" or len(tokens[0]) != 2:
        raise ValueError(f"{path}: first line must be 'players n'")
    n = int(tokens[0][1])
    rest = tokens[1:]
    counts = None
    if rest and rest[0][0] == "actions":
        counts = tuple(int(k) for k in rest[0][1:])
        rest = rest[1:]
        if len(counts) != n:
            raise ValueError(f"{path}: 'actions' lists {len(counts)} counts for {n} players")
    try:
        values = np.array([float(x) for row in rest for x in row])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric payoff entry ({exc})") from None
    if values.size % n:
        raise ValueError(f"{path}: {values.size} payoffs do not split into {n} player blocks")
    per = values.size // n
    if counts is None:
        k = round(per ** (1.0 / n))
        if k**n != per:
            raise ValueError(f"{path}: cannot infer action counts from {per} entries; add an 'actions' line")
        counts = (k,) * n
    if math.prod(counts) != per:
        raise ValueError(f"{path}: expected {math.prod(counts)} entries per player, found {per}")
    return StagePayoff(values.reshape(n, *counts))


def write_payoff_file(path, payoffs: StagePayoff) -> None:
    lines = [f"players {payoffs.n}", "actions " + " ".join(map(str, payoffs.action_counts))]
    for i in range(payoffs.n):
        lines.append(" ".join(repr(float(x)) for x in payoffs.tensors[i].reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def joint_actions(counts):
    return list(itertools.product(*(range(k) for k in counts)))
