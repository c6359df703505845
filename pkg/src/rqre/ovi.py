"""Optimistic value iteration for risk-sensitive QRE with linear function approximation.

Training alternates two phases. At an update point a backward pass over
stages ``h = H-1, ..., 0`` refits one ridge design per stage on the buffered
transitions, with targets

    y_i = r_i / scale + rho_env(V_i(x'))

where ``V_i(x')`` is the regularised risk value of the stage RQRE solved on the
optimistic next-stage estimates. Then a window of ``update_frequency``
episodes is executed with the stage RQRE of the current optimistic
estimates at each visited state. Episodes inside a window share the same
estimates and do not interact, so they are stepped in lockstep and their
stage games are solved as one batch; each episode draws from its own
generator seeded by ``(seed, episode)``, which keeps the run identical to
stepping the episodes one after another. The returned agents hold the
estimates that drove the final window; data from that window is logged but
not refit.

Internally stages are 0-based. Stage ``h`` estimates are clipped to
``[0, B (H - h) / H]``: with per-step rewards in [0, 1] after scaling, the
regularised value of the remaining ``H - h`` steps cannot exceed that cap.
"""

from __future__ import annotations

import copy
import logging
import math
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .envs.base import OUTCOMES, Env
from .linear_fa import OviHyper, PotentialAudit, PotentialTracker, RidgeDesign
from .risk import RiskKind, RiskSpec, risk_of
from .stage_solver import SolverConfig, batch_exploitability, batch_values, solve_batch

log = logging.getLogger(__name__)

MA_WINDOW = 100


@dataclass(frozen=True)
class Transition:
    h: int
    obs: np.ndarray
    actions: tuple[int, ...]
    rewards: np.ndarray
    next_obs: np.ndarray
    terminal: bool
    episode: int


@dataclass(frozen=True)
class TrainConfig:
    """``risk_samples`` None means 32 next-state draws on generative envs and 1 otherwise."""

    episodes: int
    horizon: int
    solver: SolverConfig = field(default_factory=SolverConfig)
    hyper: OviHyper = field(default_factory=OviHyper)
    buffer_capacity: int = 1000
    update_frequency: int = 20
    env_risk: RiskSpec = field(default_factory=RiskSpec.neutral)
    seed: int = 0
    reward_scale: float = 1.0
    risk_samples: int | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("episodes", "horizon", "buffer_capacity", "update_frequency"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")
        if self.risk_samples is not None and self.risk_samples < 1:
            raise ValueError("risk_samples must be positive")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be nonnegative")

    def samples_for(self, env: Env) -> int:
        if self.risk_samples is not None:
            return self.risk_samples
        return 32 if env.spec.generative else 1


class PotentialViolation(AssertionError):
    pass


@dataclass
class TrainedAgents:
    """Per-stage designs and weights plus everything needed to act."""

    designs: list[RidgeDesign]
    weights: list[np.ndarray]
    solver: SolverConfig
    hyper: OviHyper
    features: Callable
    action_counts: tuple[int, ...]
    reward_scale: float = 1.0
    env_risk: RiskSpec = field(default_factory=RiskSpec.neutral)
    feature_parts: Callable | None = None
    fitted_stages: list[bool] | None = None

    def __post_init__(self):
        if self.fitted_stages is None:
            self.fitted_stages = [False] * len(self.designs)

    @property
    def horizon(self) -> int:
        return len(self.designs)

    @property
    def n(self) -> int:
        return len(self.action_counts)

    def cap(self, h: int) -> float:
        return self.hyper.B_clip * (self.horizon - h) / self.horizon

    def fitted(self, h: int) -> bool:
        return 0 <= h < self.horizon and self.fitted_stages[h]

    def q_tensors(self, obs, h: int, bonus: bool = True) -> np.ndarray:
        """Clipped estimates as a batch of stage games, shape (B, n, A_1, ..., A_n)."""
        obs = np.atleast_2d(np.asarray(obs, float))
        if not self.fitted(h):
            return np.full((obs.shape[0], self.n, *self.action_counts), self.cap(h))
        hyper = replace(self.hyper, B_clip=self.cap(h))
        design, w = self.designs[h], self.weights[h]
        if self.feature_parts is not None:
            q = design.q_estimate_parts(self.feature_parts(obs, h), hyper, with_bonus=bonus, weights=w)
        else:
            q = design.q_estimate(self.features(obs, h), hyper, with_bonus=bonus, weights=w)
        return np.moveaxis(q, 0, 1)

    def policies(self, obs, h: int, bonus: bool = False, init=None):
        """Stage RQRE at each observation: ``(profile, residual, iterations, tensors)``."""
        Q = self.q_tensors(obs, h, bonus)
        profile, residual, iters, _ = solve_batch(Q, self.solver, init=init)
        return profile, residual, iters, Q

    def values(self, obs, h: int, bonus: bool = True) -> np.ndarray:
        """Regularised risk value of the stage RQRE, shape (B, n); zero past the horizon."""
        obs = np.atleast_2d(np.asarray(obs, float))
        if h >= self.horizon:
            return np.zeros((obs.shape[0], self.n))
        profile, _, _, Q = self.policies(obs, h, bonus)
        return batch_values(Q, profile, self.solver)


def compute_targets(rewards, continuation, cfg: TrainConfig, cap: float | None = None) -> np.ndarray:
    """Regression targets ``r / scale + rho_env(V)``, shape (m, n).

    ``continuation`` is (m, n) for single next-state samples, where the
    empirical risk of one sample is the sample itself, or (m, N, n) for ``N``
    equally weighted draws. Terminal rows carry zero continuation. Values are
    rewards, so the loss-side risk is applied as ``-rho(-V)``.
    """
    r = np.asarray(rewards, float) / cfg.reward_scale
    c = np.asarray(continuation, float)
    if c.ndim == 3:
        if cfg.env_risk.kind is RiskKind.RISK_NEUTRAL:
            c = c.mean(axis=1)
        else:
            flat = np.array([[-risk_of(cfg.env_risk, -c[j, :, i]) for i in range(c.shape[2])] for j in range(c.shape[0])])
            c = flat.reshape(c.shape[0], c.shape[2])
    if c.shape != r.shape:
        raise ValueError(f"continuation shape {c.shape} does not match rewards {r.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("missing or non-finite next-state value")
    y = r + c
    return y if cap is None else np.clip(y, 0.0, cap)


@dataclass
class TrainLog:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    potential: list[PotentialAudit] = field(default_factory=list)
    uncertified: int = 0

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([np.nan if r[k] == "" else r[k] for r in self.rows], float)

    def csv_lines(self) -> list[str]:
        return [",".join(self.columns)] + [format_row(r) for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")


def format_row(row) -> str:
    return ",".join(v if isinstance(v, str) else repr(float(v)) if isinstance(v, float) else str(v) for v in row)


@dataclass
class TrainHooks:
    """Optional callbacks; ``strict`` turns a failed potential audit into an exception."""

    on_episode: Callable[[list], None] | None = None
    on_checkpoint: Callable[[Trainer, int], None] | None = None
    strict: bool = True


def _episode_seeds(seed: int, episode: int) -> tuple[int, np.random.Generator]:
    ss = np.random.SeedSequence([seed, episode])
    env_ss, act_ss = ss.spawn(2)
    return int(env_ss.generate_state(1)[0]), np.random.default_rng(act_ss)


def _sample(rng: np.random.Generator, probs: np.ndarray) -> int:
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), probs.size - 1))


class Trainer:
    """Holds the full training state, so a pickled trainer resumes exactly."""

    def __init__(self, env: Env, cfg: TrainConfig, hooks: TrainHooks | None = None):
        if env.spec.horizon != cfg.horizon:
            raise ValueError(f"env horizon {env.spec.horizon} differs from config horizon {cfg.horizon}")
        self.env = env
        self.cfg = cfg
        self.hooks = hooks or TrainHooks()
        spec = env.spec
        self.n, self.H, self.d = spec.n, spec.horizon, spec.d
        self.samples = cfg.samples_for(env)
        if self.samples > 1 and not spec.generative:
            raise ValueError("risk_samples > 1 needs an environment with an exact kernel")
        self.agents = TrainedAgents(
            [RidgeDesign(self.d, self.n, cfg.hyper.lam) for _ in range(self.H)],
            [np.zeros((self.n, self.d)) for _ in range(self.H)],
            cfg.solver,
            cfg.hyper,
            env.joint_features,
            tuple(spec.action_counts),
            cfg.reward_scale,
            cfg.env_risk,
            env.feature_parts,
        )
        self.buffers = [deque(maxlen=cfg.buffer_capacity) for _ in range(self.H)]
        self.warm: list[deque] = [deque(maxlen=cfg.buffer_capacity) for _ in range(self.H)]
        self.trackers = [PotentialTracker(self.d, cfg.hyper.lam) for _ in range(self.H)]
        self.last_targets: list[np.ndarray] = [np.zeros((0, self.n)) for _ in range(self.H)]
        self.episode = 0
        self.updates = 0
        self.returns: list[float] = []
        columns = ["episode", "team_return", "team_return_ma100", "mean_bonus"]
        columns += [f"bonus_h{h + 1}" for h in range(self.H)]
        columns += ["solver_iterations", "uncertified", "exploitability"]
        columns += [f"n_{label.replace('-', '_')}" for label in OUTCOMES]
        self.log = TrainLog(columns)
        self._exploit_tensor = self._true_tensor()

    def _true_tensor(self):
        from .envs.matrix_game import MatrixGame

        if isinstance(self.env, MatrixGame) and self.H == 1:
            return self.env.payoffs.tensors[None] / self.cfg.reward_scale
        return None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["hooks"] = None  # callbacks belong to the caller, not the training state
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self.hooks = TrainHooks()

    # -- public driver -------------------------------------------------------------

    def run(self) -> tuple[TrainedAgents, TrainLog]:
        while self.episode < self.cfg.episodes:
            if self.episode > 0:
                self.backward_pass()
            count = min(self.cfg.update_frequency, self.cfg.episodes - self.episode)
            start = self.episode
            self.run_window(count)
            every = self.cfg.checkpoint_every
            if every and self.hooks.on_checkpoint and (self.episode // every) > (start // every):
                self.hooks.on_checkpoint(self, self.episode)
        self.log.potential = [t.audit() for t in self.trackers]
        bad = [(h + 1, a) for h, a in enumerate(self.log.potential) if not a.passed]
        if bad:
            msg = "; ".join(f"stage {h}: {a.cumulative:.4g} > {a.bound:.4g}" for h, a in bad)
            if self.hooks.strict:
                raise PotentialViolation(f"elliptical potential audit failed: {msg}")
            log.warning("elliptical potential audit failed: %s", msg)
        return self.agents, self.log

    # -- backward pass ---------------------------------------------------------------

    def backward_pass(self) -> None:
        self.updates += 1
        for h in reversed(range(self.H)):
            buf = self.buffers[h]
            if not buf:
                continue
            items = list(buf)
            phis = np.stack([p for p, _ in items])
            rewards = np.stack([t.rewards for _, t in items])
            live = np.array([not t.terminal and h + 1 < self.H for _, t in items])
            if self.samples == 1:
                cont = np.zeros((len(items), self.n))
                if live.any():
                    idx = np.flatnonzero(live)
                    nxt = np.stack([items[j][1].next_obs for j in idx])
                    cont[idx] = self._next_values(h, idx, nxt)
            else:
                cont = self._sampled_continuation(h, items, live)
            targets = compute_targets(rewards, cont, self.cfg, cap=self.agents.cap(h))
            self.last_targets[h] = targets
            design = RidgeDesign.from_data(phis, targets, self.cfg.hyper.lam)
            self.agents.designs[h] = design
            self.agents.weights[h] = design.weights()
            self.agents.fitted_stages[h] = True

    def _next_values(self, h: int, idx: np.ndarray, nxt: np.ndarray) -> np.ndarray:
        warm = self.warm[h]
        init = None
        if self.agents.fitted(h + 1):
            cached = [warm[j] for j in idx]
            if all(c is not None for c in cached):
                init = [np.stack([c[i] for c in cached]) for i in range(self.n)]
        profile, residual, _, Q = self.agents.policies(nxt, h + 1, bonus=True, init=init)
        self._count_uncertified(residual)
        for k, j in enumerate(idx):
            warm[j] = [p[k].copy() for p in profile]
        return batch_values(Q, profile, self.cfg.solver)

    def _sampled_continuation(self, h: int, items, live) -> np.ndarray:
        N = self.samples
        rng = np.random.default_rng([self.cfg.seed, self.updates, h, 2])
        cont = np.zeros((len(items), N, self.n))
        draws, owners = [], []
        for j, (_, t) in enumerate(items):
            if not live[j]:
                continue
            states, probs = self.env.kernel(t.obs, t.actions, h)
            pick = rng.choice(len(probs), size=N, p=probs / probs.sum())
            draws.append(states[pick])
            owners.append(j)
        if draws:
            obs = np.concatenate(draws)
            profile, residual, _, Q = self.agents.policies(obs, h + 1, bonus=True)
            self._count_uncertified(residual)
            V = batch_values(Q, profile, self.cfg.solver).reshape(len(owners), N, self.n)
            cont[owners] = V
        return cont

    def _count_uncertified(self, residual) -> int:
        bad = int(np.sum(residual > self.cfg.solver.tol))
        self.log.uncertified += bad
        if bad:
            log.debug("%d stage solves not certified; using best iterates", bad)
        return bad

    # -- execution ---------------------------------------------------------------------

    def run_window(self, count: int) -> None:
        first = self.episode
        envs, rngs, obs = [], [], []
        for e in range(count):
            env_seed, rng = _episode_seeds(self.cfg.seed, first + e)
            env = copy.deepcopy(self.env)
            obs.append(env.reset(env_seed))
            envs.append(env)
            rngs.append(rng)
        obs = np.stack(obs)
        alive = np.ones(count, bool)
        team = np.zeros(count)
        bonus = np.full((count, self.H), np.nan)
        iterations = 0
        uncertified = np.zeros(count, int)
        exploit = np.full(count, np.nan)
        outcomes = np.zeros((count, len(OUTCOMES)), int)
        for h in range(self.H):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            profile, residual, iters, Q = self.agents.policies(obs[idx], h, bonus=True)
            iterations += iters
            uncertified[idx] += residual > self.cfg.solver.tol
            self._count_uncertified(residual)
            if self._exploit_tensor is not None:
                true = np.broadcast_to(self._exploit_tensor, (idx.size, *self._exploit_tensor.shape[1:]))
                exploit[idx] = batch_exploitability(true, profile, self.cfg.solver).max(axis=1)
            phis_all = self.env.joint_features(obs[idx], h)
            for k, e in enumerate(idx):
                actions = tuple(_sample(rngs[e], profile[i][k]) for i in range(self.n))
                phi = phis_all[(k, *actions)]
                if self.agents.fitted(h):
                    bonus[e, h] = self.cfg.hyper.beta * math.sqrt(self.agents.designs[h].inverse_quadratic(phi))
                else:
                    bonus[e, h] = self.cfg.hyper.beta * float(np.linalg.norm(phi)) / math.sqrt(self.cfg.hyper.lam)
                try:
                    rewards, nxt, done = envs[e].step(actions)
                except Exception as exc:
                    raise RuntimeError(f"environment step failed at episode {first + e + 1}, stage {h + 1}: {exc}") from exc
                rewards = np.asarray(rewards, float)
                lo, hi = self.env.spec.reward_range
                if rewards.min() < lo or rewards.max() > hi:
                    raise RuntimeError(f"reward {rewards} outside declared range at episode {first + e + 1}")
                team[e] += rewards.sum()
                label = envs[e].outcome()
                if label in OUTCOMES:
                    outcomes[e, OUTCOMES.index(label)] += 1
                terminal = bool(done) or h + 1 == self.H
                t = Transition(h, obs[e].copy(), actions, rewards, np.asarray(nxt, float), terminal, first + e)
                self.buffers[h].append((phi.copy(), t))
                self.warm[h].append(None)
                self.trackers[h].add(phi)
                obs[e] = nxt
                if terminal:
                    alive[e] = False
        for e in range(count):
            self.returns.append(float(team[e]))
            recent = self.returns[-MA_WINDOW:]
            stage_bonus = bonus[e]
            row = [first + e + 1, float(team[e]), float(np.mean(recent)), float(np.nanmean(stage_bonus))]
            row += ["" if np.isnan(b) else float(b) for b in stage_bonus]
            row += [int(iterations), int(uncertified[e]), "" if np.isnan(exploit[e]) else float(exploit[e])]
            row += [int(c) for c in outcomes[e]]
            self.log.rows.append(row)
            if self.hooks.on_episode:
                self.hooks.on_episode(row)
        self.episode += count


def train(env: Env, cfg: TrainConfig, hooks: TrainHooks | None = None) -> tuple[TrainedAgents, TrainLog]:
    """Run RQRE-OVI for ``cfg.episodes`` episodes; see the module docstring."""
    return Trainer(env, cfg, hooks).run()


def optimism_audit(
    trained: TrainedAgents, env, probes: int = 1000, tol: float = 1e-6, seed: int = 0
) -> float:
    """Fraction of random ``(x, a, h, i)`` where ``Q + tol`` dominates the exact backup.

    The backup is ``r / scale + rho_env(V_{h+1}(x'))`` under the true kernel,
    with ``V_{h+1}`` the value of the stage RQRE on the trained optimistic
    estimates, i.e. the quantity the regression at stage ``h`` estimates.
    """
    if not getattr(env.spec, "generative", False) or not hasattr(env, "exact_backup"):
        raise ValueError("optimism audit needs a synthetic environment with an exact kernel")
    X = env.n_states
    states = np.eye(X)
    H, n = trained.horizon, trained.n
    q_est, backups = [], []
    for h in range(H):
        V_next = trained.values(states, h + 1, bonus=True).T if h + 1 < H else np.zeros((n, X))
        backups.append(env.exact_backup(V_next, h, trained.env_risk, trained.reward_scale))
        q_est.append(np.moveaxis(trained.q_tensors(states, h, bonus=True), 1, 0))
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(probes):
        h = int(rng.integers(H))
        i = int(rng.integers(n))
        x = int(rng.integers(X))
        a = tuple(int(rng.integers(k)) for k in trained.action_counts)
        hits += q_est[h][(i, x, *a)] + tol >= backups[h][(i, x, *a)]
    return hits / probes


__all__ = [
    "PotentialViolation",
    "TrainConfig",
    "TrainHooks",
    "TrainLog",
    "TrainedAgents",
    "Trainer",
    "Transition",
    "compute_targets",
    "optimism_audit",
    "train",
]
