"""Exactly linear Markov games over a small finite state set.

Features ``phi(x, a)`` are drawn once from a Dirichlet, so each lies on the
probability simplex in R^d (hence ``||phi|| <= 1``). Every row of ``mu_h`` is a
distribution over states, which makes ``P_h(. | x, a) = phi(x, a)^T mu_h`` a
valid kernel for any simplex feature, and ``theta_{i,h} in [0, 1]^d`` keeps
``r = phi^T theta`` inside [0, 1].
"""

from __future__ import annotations

import numpy as np

from ..risk import RiskKind, RiskSpec, risk_of
from .base import EnvSpec, GenerativeEnv

MAX_STATES = 20


class ConstructionError(RuntimeError):
    pass


class SyntheticLinearMG(GenerativeEnv):
    """Observations are one-hot state indicators of length ``|X|``.

    Ground truth: ``phi`` (|X|, A_1, ..., A_n, d), ``mu`` (H, d, |X|),
    ``theta`` (H, n, d) and the initial distribution ``rho0`` (|X|,).
    With ``bernoulli_rewards`` each realised reward is a coin with mean
    ``phi^T theta``; otherwise rewards are deterministic.
    """

    name = "synthetic"

    def __init__(self, phi, mu, theta, rho0, seed: int = 0, bernoulli_rewards: bool = False):
        self.phi = np.asarray(phi, float)
        self.mu = np.asarray(mu, float)
        self.theta = np.asarray(theta, float)
        self.rho0 = np.asarray(rho0, float)
        self.n_states = self.phi.shape[0]
        horizon, n, d = self.theta.shape
        counts = self.phi.shape[1:-1]
        if len(counts) != n or self.mu.shape != (horizon, d, self.n_states):
            raise ValueError("phi, mu and theta shapes disagree")
        self.spec = EnvSpec(
            n=n,
            action_counts=tuple(int(k) for k in counts),
            horizon=horizon,
            d=d,
            reward_range=(0.0, 1.0),
            generative=True,
            obs_dim=self.n_states,
        )
        self.bernoulli_rewards = bernoulli_rewards
        self._eye = np.eye(self.n_states)
        self.rng = np.random.default_rng(seed)
        self.state = 0
        self.t = 0

    # -- exact model -------------------------------------------------------------

    def transition_matrix(self, h: int) -> np.ndarray:
        """``P_h`` as (|X|, A_1, ..., A_n, |X|)."""
        return self.phi @ self.mu[h]

    def reward_tensor(self, h: int) -> np.ndarray:
        """Mean rewards as (n, |X|, A_1, ..., A_n)."""
        return np.moveaxis(self.phi @ self.theta[h].T, -1, 0)

    def exact_backup(
        self, next_values: np.ndarray, h: int, risk: RiskSpec | None = None, reward_scale: float = 1.0
    ) -> np.ndarray:
        """``r_i / scale + rho(V_i(x'))`` under the exact kernel, shape (n, |X|, A_1, ..., A_n).

        ``next_values`` is (n, |X|). Environment risk acts on values, so it is
        evaluated as ``-rho(-V)`` on the loss scale.
        """
        V = np.asarray(next_values, float)
        P = self.transition_matrix(h)
        R = self.reward_tensor(h) / reward_scale
        if risk is None or risk.kind is RiskKind.RISK_NEUTRAL:
            return R + np.moveaxis(P @ V.T, -1, 0)
        flatP = P.reshape(-1, self.n_states)
        out = np.empty_like(R)
        for i in range(self.spec.n):
            cont = np.array([-risk_of(risk, -V[i], row) for row in flatP])
            out[i] = R[i] + cont.reshape(R.shape[1:])
        return out

    def state_index(self, obs) -> int:
        return int(np.argmax(np.asarray(obs).reshape(-1)))

    def kernel(self, obs, actions, h):
        x = self.state_index(obs)
        return self._eye.copy(), self.transition_matrix(h)[(x, *tuple(actions))]

    def mean_reward(self, obs, actions, h):
        x = self.state_index(obs)
        return self.reward_tensor(h)[(slice(None), x, *tuple(actions))]

    # -- sampling ------------------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        self.state = int(self.rng.choice(self.n_states, p=self.rho0))
        return self._eye[self.state].copy()

    def step(self, actions):
        actions = tuple(int(a) for a in actions)
        h = self.t
        mean = self.reward_tensor(h)[(slice(None), self.state, *actions)]
        rewards = (self.rng.random(mean.shape) < mean).astype(float) if self.bernoulli_rewards else mean.copy()
        probs = self.transition_matrix(h)[(self.state, *actions)]
        self.state = int(self.rng.choice(self.n_states, p=probs / probs.sum()))
        self.t += 1
        return rewards, self._eye[self.state].copy(), self.t >= self.spec.horizon

    def joint_features(self, obs, h):
        idx = np.argmax(np.asarray(obs, float).reshape(-1, self.n_states), axis=1)
        return self.phi[idx]


def synthetic_linear_mg(
    d: int,
    n: int,
    horizon: int,
    action_counts,
    seed: int = 0,
    n_states: int = 8,
    concentration: float = 0.5,
    bernoulli_rewards: bool = False,
) -> SyntheticLinearMG:
    """Random exactly linear game; retries construction up to 100 seeds."""
    counts = tuple(int(k) for k in action_counts)
    if len(counts) != n:
        raise ValueError("one action count per player")
    if not 1 <= n_states <= MAX_STATES:
        raise ValueError(f"state count must lie in [1, {MAX_STATES}]")
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        phi = rng.dirichlet(np.full(d, concentration), size=(n_states, *counts))
        mu = rng.dirichlet(np.full(n_states, concentration), size=(horizon, d))
        theta = rng.uniform(0, 1, (horizon, n, d))
        rho0 = np.full(n_states, 1.0 / n_states)
        rows = phi @ mu[0]
        if np.all(np.isfinite(phi)) and np.allclose(rows.sum(-1), 1.0, atol=1e-10) and rows.min() >= 0:
            return SyntheticLinearMG(phi, mu, theta, rho0, seed=seed, bernoulli_rewards=bernoulli_rewards)
    raise ConstructionError(f"could not build a valid linear game from seed {seed}")


def linear_bandit(theta, action_features, seed: int = 0) -> SyntheticLinearMG:
    """One-player, one-state, one-step game with deterministic rewards ``phi_a^T theta``."""
    feats = np.asarray(action_features, float)
    theta = np.asarray(theta, float)
    k, d = feats.shape
    if np.any(np.linalg.norm(feats, axis=1) > 1 + 1e-12):
        raise ValueError("action features must have norm at most 1")
    if np.any(feats @ theta < 0) or np.any(feats @ theta > 1):
        raise ValueError("rewards must lie in [0, 1]")
    return SyntheticLinearMG(feats[None], np.ones((1, d, 1)), theta[None, None], np.ones(1), seed=seed)
