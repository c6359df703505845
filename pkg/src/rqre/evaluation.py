"""Evaluation protocols: self-play, perturbed partners, cross-play and outcome statistics.

A policy is anything with ``profile(obs, h) -> [dist_0, ..., dist_{n-1}]``
(each ``(B, k_i)``) for a batch of observations. Trained agents act with the
stage RQRE of their bonus-free estimates. In mixed pairings each agent only
controls its own seat and plays that seat's marginal.

Rollouts of one condition run in lockstep; rollout ``r`` owns an environment
copy and a generator seeded by ``(seed, condition, r)``, so every statistic is
a deterministic function of the seed.
"""

from __future__ import annotations

import copy
import csv
import math
import zlib
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .envs.base import OUTCOMES, Env
from .envs.grid_stag_hunt import EAST, HARE, INTERACT, NORTH, SOUTH, STAG, STAY, WEST, GridStagHunt
from .envs.matrix_game import MatrixGame
from .ovi import TrainedAgents
from .stage_solver import SolverConfig, batch_exploitability

SCHEMA = "# rqre-eval schema v1"
CSV_COLUMNS = ["condition", "delta", "pairing", "metric", "value", "stderr", "rollouts", "seed"]


class Policy(Protocol):
    def profile(self, obs: np.ndarray, h: int) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class EvalConfig:
    rollouts: int = 200
    deltas: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    deviation_action: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.rollouts < 1:
            raise ValueError("rollouts must be at least 1")
        if any(not 0 <= d <= 1 for d in self.deltas):
            raise ValueError("deltas must lie in [0, 1]")


class AgentPolicy:
    """Bonus-free stage RQRE of trained agents."""

    def __init__(self, agents: TrainedAgents):
        self.agents = agents

    def profile(self, obs, h):
        return self.agents.policies(obs, h, bonus=False)[0]


class FixedPolicy:
    """State-independent profile, e.g. a hand-built matrix-game strategy."""

    def __init__(self, dists):
        self.dists = [np.asarray(d, float) for d in dists]

    def profile(self, obs, h):
        batch = np.atleast_2d(obs).shape[0]
        return [np.broadcast_to(d, (batch, d.size)).copy() for d in self.dists]


def _toward(src, dst, larger_gap_first: bool = False) -> int:
    dr, dc = int(dst[0] - src[0]), int(dst[1] - src[1])
    if dr and not (larger_gap_first and abs(dc) >= abs(dr)):
        return SOUTH if dr > 0 else NORTH
    if dc:
        return EAST if dc > 0 else WEST
    return STAY


class GridScript:
    """Deterministic grid player that fetches ``target`` then meets the partner and interacts.

    It reads positions from the observation and the resource layout from the
    environment it is bound to, so it only makes sense in lockstep rollouts
    created by this module.
    """

    def __init__(self, targets=(STAG, STAG)):
        self.targets = tuple(targets)
        self.envs: list[GridStagHunt] = []

    def bind(self, envs):
        self.envs = envs

    def profile(self, obs, h):
        obs = np.atleast_2d(obs)
        out = [np.zeros((obs.shape[0], 6)) for _ in range(2)]
        for b, env in enumerate(self.envs[: obs.shape[0]]):
            for i in range(2):
                out[i][b, self._act(env, i)] = 1.0
        return out

    def _act(self, env: GridStagHunt, i: int) -> int:
        me, other = env.pos[i], env.pos[1 - i]
        if env.inv[i] != self.targets[i]:
            rows, cols = np.nonzero(env.board == self.targets[i])
            if rows.size == 0:
                return STAY
            k = int(np.argmin(np.abs(rows - me[0]) + np.abs(cols - me[1])))
            return _toward(me, (rows[k], cols[k]))
        gap = np.abs(me - other).sum()
        if gap <= 1:
            return INTERACT
        if i == 1 and gap == 2 and env.inv[0] == self.targets[0]:
            # let agent 0 close the last step; moving together would swap places
            return STAY
        return _toward(me, other, larger_gap_first=True)


def as_policy(obj) -> Policy:
    return AgentPolicy(obj) if isinstance(obj, TrainedAgents) else obj


@dataclass
class Rollouts:
    returns: np.ndarray  # (R, n) per-player totals
    outcomes: dict = field(default_factory=dict)

    @property
    def team(self) -> np.ndarray:
        return self.returns.sum(axis=1)


def _condition_key(name: str) -> int:
    return zlib.crc32(name.encode())


def rollout(
    env: Env,
    seats,
    cfg: EvalConfig,
    condition: str,
    delta: float = 0.0,
    perturbed_seat: int = 1,
    deviation: int | None = None,
) -> Rollouts:
    """Run ``cfg.rollouts`` episodes in lockstep; seat ``j`` is played by ``seats[j] = (policy, role)``.

    With probability ``delta`` the perturbed seat plays ``deviation`` instead
    of its sampled action.
    """
    R, n, H = cfg.rollouts, env.spec.n, env.spec.horizon
    dev = env.default_deviation() if deviation is None else deviation
    key = _condition_key(condition)
    envs, rngs, obs = [], [], []
    for r in range(R):
        ss = np.random.SeedSequence([cfg.seed, key, r])
        env_ss, act_ss = ss.spawn(2)
        e = copy.deepcopy(env)
        obs.append(e.reset(int(env_ss.generate_state(1)[0])))
        envs.append(e)
        rngs.append(np.random.default_rng(act_ss))
    for policy, _ in seats:
        if isinstance(policy, GridScript):
            policy.bind(envs)
    obs = np.stack(obs)
    totals = np.zeros((R, n))
    outcomes = {k: 0 for k in OUTCOMES}
    alive = np.ones(R, bool)
    for h in range(H):
        if not alive.any():
            break
        dists = []
        cache = {}
        for policy, role in seats:
            if id(policy) not in cache:
                cache[id(policy)] = policy.profile(obs, h)
            dists.append(cache[id(policy)][role])
        for r in np.flatnonzero(alive):
            rng = rngs[r]
            acts = []
            for j in range(n):
                p = dists[j][r]
                cdf = np.cumsum(p)
                a = int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), p.size - 1))
                if j == perturbed_seat and delta > 0 and rng.random() < delta:
                    a = dev
                acts.append(a)
            rewards, nxt, done = envs[r].step(acts)
            totals[r] += rewards
            label = envs[r].outcome()
            if label in outcomes:
                outcomes[label] += 1
            obs[r] = nxt
            if done:
                alive[r] = False
    return Rollouts(totals, outcomes)


def _stats(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _check(agents, env: Env):
    if isinstance(agents, TrainedAgents):
        if tuple(agents.action_counts) != tuple(env.spec.action_counts) or agents.horizon != env.spec.horizon:
            raise ValueError("agents were trained on a different environment spec")


@dataclass
class EvalReport:
    """Tidy records plus convenience views of the headline numbers."""

    records: list[dict] = field(default_factory=list)
    seed: int = 0
    rollouts: int = 0

    def add(self, condition, metric, value, stderr="", delta="", pairing=""):
        self.records.append(
            dict(
                condition=condition,
                delta=delta,
                pairing=pairing,
                metric=metric,
                value="" if value is None else value,
                stderr=stderr,
                rollouts=self.rollouts,
                seed=self.seed,
            )
        )

    def value(self, condition, metric, delta="", pairing=""):
        for rec in self.records:
            if (rec["condition"], rec["metric"], rec["delta"], rec["pairing"]) == (condition, metric, delta, pairing):
                return None if rec["value"] == "" else rec["value"]
        raise KeyError((condition, metric, delta, pairing))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(SCHEMA + "\n")
            writer = csv.DictWriter(fh, CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for rec in self.records:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})


def self_play(agents, env: Env, cfg: EvalConfig) -> dict:
    """Mean and standard error of the team return with one policy in every seat."""
    _check(agents, env)
    policy = as_policy(agents)
    res = rollout(env, [(policy, j) for j in range(env.spec.n)], cfg, "self_play")
    mean, se = _stats(res.team)
    return {"mean": mean, "stderr": se, "per_player": res.returns.mean(axis=0), "outcomes": res.outcomes}


def perturbed_partner(ego, partner, env: Env, cfg: EvalConfig) -> dict:
    """Retention curve ``R(delta) / R(0)`` when the partner seat deviates with probability ``delta``.

    Returns ``{delta: (mean, stderr, retention)}``; retention is None when R(0) = 0.
    """
    if 0.0 not in cfg.deltas:
        raise ValueError("the delta grid must include 0")
    _check(ego, env)
    _check(partner, env)
    a, b = as_policy(ego), as_policy(partner)
    seats = [(a, 0), (b, 1)]
    out = {}
    for delta in cfg.deltas:
        res = rollout(env, seats, cfg, f"perturbed:{delta!r}", delta, 1, cfg.deviation_action)
        out[delta] = _stats(res.team)
    base = out[0.0][0]
    return {d: (m, s, None if base == 0 else (1.0 if d == 0 else m / base)) for d, (m, s) in out.items()}


def cross_play(pairings, env: Env, cfg: EvalConfig) -> list[dict]:
    """Mean per-agent rewards for every pairing in both seat orders."""
    out = []
    for k, (A, B) in enumerate(pairings):
        _check(A, env)
        _check(B, env)
        pa, pb = as_policy(A), as_policy(B)
        ab = rollout(env, [(pa, 0), (pb, 1)], cfg, f"cross:{k}:AB")
        ba = rollout(env, [(pb, 0), (pa, 1)], cfg, f"cross:{k}:BA")
        out.append(
            {
                "AB": (_stats(ab.returns[:, 0]), _stats(ab.returns[:, 1])),
                "BA": (_stats(ba.returns[:, 1]), _stats(ba.returns[:, 0])),
            }
        )
    return out


def outcome_fractions(agents, env: Env, cfg: EvalConfig):
    """``(stag-stag, hare-hare, mixed)`` fractions over all interactions, or None without any."""
    policy = as_policy(agents)
    res = rollout(env, [(policy, j) for j in range(env.spec.n)], cfg, "outcomes")
    return fractions(res.outcomes)


def fractions(counts: dict):
    total = sum(counts.get(k, 0) for k in OUTCOMES)
    if total == 0:
        return None
    return tuple(counts.get(k, 0) / total for k in OUTCOMES)


def exploitability_trace(checkpoints, env: Env, solver: SolverConfig | None = None, window: int = 1):
    """Max-player gap of each checkpoint's bonus-free policy against the true payoff tensor.

    Returns ``(gaps, mean of the last `window` gaps)``. The true tensor is
    divided by each checkpoint's reward scale so that it is in the units the
    agents learned.
    """
    if not isinstance(env, MatrixGame) or env.spec.horizon != 1:
        raise ValueError("exploitability traces need a one-step matrix game with exact payoffs")
    gaps = []
    obs = env.reset()[None]
    for agents in checkpoints:
        cfg = solver or agents.solver
        profile = agents.policies(obs, 0, bonus=False)[0]
        true = env.payoffs.tensors[None] / agents.reward_scale
        gaps.append(float(batch_exploitability(true, profile, cfg).max()))
    gaps = np.array(gaps)
    return gaps, float(gaps[-window:].mean()) if gaps.size else float("nan")


def full_report(agents, env: Env, cfg: EvalConfig, partner=None) -> EvalReport:
    """Self-play, retention and, on the grid, outcome fractions as one tidy report."""
    report = EvalReport(seed=cfg.seed, rollouts=cfg.rollouts)
    sp = self_play(agents, env, cfg)
    report.add("self_play", "team_return", sp["mean"], sp["stderr"])
    fr = fractions(sp["outcomes"])
    if isinstance(env, (GridStagHunt, MatrixGame)):
        for name, value in zip(OUTCOMES, fr or (None, None, None)):
            report.add("self_play", f"fraction_{name}", value)
    curve = perturbed_partner(agents, partner if partner is not None else agents, env, cfg)
    for delta, (mean, se, ret) in curve.items():
        report.add("perturbed_partner", "team_return", mean, se, delta=delta)
        report.add("perturbed_partner", "retention", ret, delta=delta)
    return report


__all__ = [
    "AgentPolicy",
    "EvalConfig",
    "EvalReport",
    "FixedPolicy",
    "GridScript",
    "HARE",
    "STAG",
    "cross_play",
    "exploitability_trace",
    "fractions",
    "full_report",
    "outcome_fractions",
    "perturbed_partner",
    "rollout",
    "self_play",
]
