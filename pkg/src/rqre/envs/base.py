"""Common environment interface.

Learners never see raw environment state: ``reset`` and ``step`` return an
observation vector, and ``joint_features(obs, h)`` maps a batch of
observations to the feature tensor over every joint action, shape
``(B, A_1, ..., A_n, d)``. Each instance owns its random generator, so a
rollout is a deterministic function of (seed, action sequence).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# interaction labels reported by ``Env.outcome``
OUTCOMES = ("stag-stag", "hare-hare", "mixed")


@dataclass(frozen=True)
class EnvSpec:
    n: int
    action_counts: tuple[int, ...]
    horizon: int
    d: int
    reward_range: tuple[float, float]
    generative: bool
    obs_dim: int

    def __post_init__(self):
        if len(self.action_counts) != self.n:
            raise ValueError("one action count per player")
        lo, hi = self.reward_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ValueError("reward range must be finite")


class Env:
    """Base class; subclasses set ``spec`` and implement the hooks below."""

    spec: EnvSpec
    name: str = "env"

    def reset(self, seed: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, bool]:
        """Apply a joint action; returns ``(rewards, next_obs, done)``."""
        raise NotImplementedError

    def joint_features(self, obs: np.ndarray, h: int) -> np.ndarray:
        raise NotImplementedError

    def feature_parts(self, obs: np.ndarray, h: int) -> list[np.ndarray]:
        """Additive pieces broadcasting to ``joint_features(obs, h)``; one piece by default."""
        return [self.joint_features(obs, h)]

    def feature(self, obs, actions, h: int) -> np.ndarray:
        return self.joint_features(np.asarray(obs, float)[None], h)[(0, *actions)]

    def default_deviation(self) -> int:
        """Fixed action used by the perturbed-partner protocol."""
        return 0

    def render(self) -> str:
        return ""

    def outcome(self) -> str | None:
        """Label of the interaction resolved on the last step, if any."""
        return None


class GenerativeEnv(Env):
    """Environment with an exact transition kernel over a finite state set."""

    def kernel(self, obs: np.ndarray, actions, h: int) -> tuple[np.ndarray, np.ndarray]:
        """Next-state observations (m, obs_dim) and their probabilities (m,)."""
        raise NotImplementedError

    def mean_reward(self, obs: np.ndarray, actions, h: int) -> np.ndarray:
        raise NotImplementedError
