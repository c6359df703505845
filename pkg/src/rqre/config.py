"""Run configuration: a TOML file validated against a strict schema.

One file fully determines a run. Unknown keys are rejected, and every error
names the offending field (or TOML line).
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .envs import coordination_payoffs, dynamic_stag_hunt, matrix_game, parse_payoff_file, stag_hunt, synthetic_linear_mg
from .evaluation import EvalConfig
from .linear_fa import OviHyper, value_cap
from .ovi import TrainConfig
from .risk import FiniteDistribution, RiskKind, RiskSpec
from .stage_solver import Method, SolverConfig


class ConfigError(ValueError):
    """Invalid configuration; the message carries field or line diagnostics."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EnvSection(_Strict):
    kind: Literal["grid_stag_hunt", "stag_hunt", "coordination", "matrix", "synthetic"]
    payoff_file: str | None = None
    alpha: float = 1.0
    # synthetic games
    d: int = Field(4, ge=1)
    players: int = Field(2, ge=1)
    action_counts: list[int] | None = None
    n_states: int = Field(8, ge=1, le=20)
    bernoulli_rewards: bool = False
    env_seed: int = 0

    @model_validator(mode="after")
    def _needs_file(self):
        if self.kind == "matrix" and not self.payoff_file:
            raise ValueError("env.kind = 'matrix' needs env.payoff_file")
        return self


class TrainSection(_Strict):
    episodes: int = Field(ge=1)
    horizon: int = Field(ge=1)
    update_frequency: int = Field(20, ge=1)
    buffer_capacity: int = Field(1000, ge=1)
    reward_scale: float = Field(1.0, gt=0)
    risk_samples: int | None = Field(None, ge=1)
    checkpoint_every: int = Field(0, ge=0)


class SolverSection(_Strict):
    epsilon: float | list[float] = 1.0
    tau: float | list[float] = 0.0
    method: Literal["FixedPoint", "MirrorAscent", "HedgeLifted"] = "FixedPoint"
    tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(1000, ge=1)
    damping: float = Field(0.5, gt=0, le=1)


class OviSection(_Strict):
    beta: float = Field(0.1, ge=0)
    lam: float = Field(1.0, gt=0)
    B_clip: float | None = Field(None, gt=0)


class RiskSection(_Strict):
    kind: Literal["RiskNeutral", "Entropic", "CVaR", "FiniteDual"] = "RiskNeutral"
    tau: float | None = None
    alpha: float | None = None
    dual_set_path: str | None = None


class EvalSection(_Strict):
    rollouts: int = Field(200, ge=1)
    deltas: list[float] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    deviation_action: int | None = None
    seed: int | None = None

    @field_validator("deltas")
    @classmethod
    def _deltas(cls, v):
        if not v or any(not 0 <= d <= 1 for d in v):
            raise ValueError("deltas must be a nonempty list of values in [0, 1]")
        return v


class SweepSection(_Strict):
    tau: list[float]
    epsilon: list[float]

    @field_validator("tau", "epsilon")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("sweep axes must be nonempty")
        return v


class RunConfig(_Strict):
    seed: int = 0
    output_dir: str = "runs/default"
    env: EnvSection
    train: TrainSection
    solver: SolverSection = SolverSection()
    ovi: OviSection = OviSection()
    risk: RiskSection = RiskSection()
    eval: EvalSection = EvalSection()
    sweep: SweepSection | None = None

    # -- builders ------------------------------------------------------------------

    def build_env(self, base_dir: Path | None = None):
        e = self.env
        H = self.train.horizon
        if e.kind == "grid_stag_hunt":
            return dynamic_stag_hunt(seed=self.seed, horizon=H)
        if e.kind == "stag_hunt":
            return stag_hunt(horizon=H)
        if e.kind == "coordination":
            return matrix_game(coordination_payoffs(e.alpha), horizon=H, name="coordination")
        if e.kind == "matrix":
            path = Path(e.payoff_file)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return matrix_game(parse_payoff_file(path), horizon=H)
        counts = e.action_counts or [2] * e.players
        return synthetic_linear_mg(
            e.d, e.players, H, counts, seed=e.env_seed, n_states=e.n_states, bernoulli_rewards=e.bernoulli_rewards
        )

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            epsilon=tuple(s.epsilon) if isinstance(s.epsilon, list) else s.epsilon,
            tau=tuple(s.tau) if isinstance(s.tau, list) else s.tau,
            method=Method(s.method),
            tol=s.tol,
            max_iters=s.max_iters,
            damping=s.damping,
        )

    def risk_spec(self, base_dir: Path | None = None) -> RiskSpec:
        r = self.risk
        kind = RiskKind(r.kind)
        if kind is RiskKind.FINITE_DUAL:
            if not r.dual_set_path:
                raise ConfigError("risk.dual_set_path: required for FiniteDual")
            path = Path(r.dual_set_path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return RiskSpec.finite_dual(read_dual_set(path))
        return RiskSpec(kind, tau=r.tau, alpha=r.alpha)

    def hyper(self, env) -> OviHyper:
        o = self.ovi
        B = o.B_clip
        if B is None:
            B = value_cap(self.train.horizon, env.spec.action_counts, self.solver_config().eps_for(env.spec.n))
        return OviHyper(beta=o.beta, B_clip=B, lam=o.lam)

    def train_config(self, env, base_dir: Path | None = None) -> TrainConfig:
        t = self.train
        return TrainConfig(
            episodes=t.episodes,
            horizon=t.horizon,
            solver=self.solver_config(),
            hyper=self.hyper(env),
            buffer_capacity=t.buffer_capacity,
            update_frequency=t.update_frequency,
            env_risk=self.risk_spec(base_dir),
            seed=self.seed,
            reward_scale=t.reward_scale,
            risk_samples=t.risk_samples,
            checkpoint_every=t.checkpoint_every,
        )

    def eval_config(self) -> EvalConfig:
        e = self.eval
        return EvalConfig(
            rollouts=e.rollouts,
            deltas=tuple(e.deltas),
            deviation_action=e.deviation_action,
            seed=self.seed if e.seed is None else e.seed,
        )

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_cell(self, tau: float, epsilon: float, output_dir: str) -> RunConfig:
        solver = self.solver.model_copy(update={"tau": tau, "epsilon": epsilon})
        return self.model_copy(update={"solver": solver, "sweep": None, "output_dir": output_dir})


def read_dual_set(path) -> list[tuple[FiniteDistribution, float]]:
    """Lines ``penalty p_1 ... p_m``; outcome ``k`` of every candidate is the k-th loss."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            nums = [float(x) for x in line.split()]
            out.append((FiniteDistribution(list(range(len(nums) - 1)), nums[1:]), nums[0]))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not out:
        raise ConfigError(f"{path}: empty dual set")
    return out


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if "RQRE_SEED" in os.environ:
        try:
            raw["seed"] = int(os.environ["RQRE_SEED"])
        except ValueError:
            raise ConfigError(f"RQRE_SEED must be an integer, got {os.environ['RQRE_SEED']!r}") from None
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}:\n{_format_validation(exc)}") from None
    try:
        cfg.solver_config()
        if cfg.risk.kind != "FiniteDual":
            cfg.risk_spec()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text, str(path))
    # relative data paths are resolved against the config file, so snapshots stay valid elsewhere
    base = path.resolve().parent
    env, risk = cfg.env, cfg.risk
    if env.payoff_file and not Path(env.payoff_file).is_absolute():
        env = env.model_copy(update={"payoff_file": str(base / env.payoff_file)})
    if risk.dual_set_path and not Path(risk.dual_set_path).is_absolute():
        risk = risk.model_copy(update={"dual_set_path": str(base / risk.dual_set_path)})
    return cfg.model_copy(update={"env": env, "risk": risk})
