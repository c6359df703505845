"""Empirical stability of the stage RQRE map versus Nash selection.

Profile distances are the max over players of the per-player l1 distance,
payoff distances the sup norm over all players' tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stage_solver import SolverConfig, StagePayoff, rqre_solve


def profile_distance(a, b) -> float:
    return max(float(np.abs(np.asarray(x) - np.asarray(y)).sum()) for x, y in zip(a, b))


def coordination_game(alpha: float) -> StagePayoff:
    """Symmetric 2x2 coordination game with payoff matrix ((1, 0), (0, alpha))."""
    return StagePayoff.symmetric([[1.0, 0.0], [0.0, alpha]])


def nash_selection(alpha: float) -> list[np.ndarray]:
    """Payoff/risk-dominant pure equilibrium of the coordination game; ties go to the first action."""
    e = np.array([1.0, 0.0]) if alpha <= 1 else np.array([0.0, 1.0])
    return [e, e.copy()]


def lipschitz_probe(
    payoff: StagePayoff,
    cfg: SolverConfig,
    num_perturbations: int,
    magnitude: float,
    seed: int = 0,
) -> float:
    """Largest observed ``d(pi(Q), pi(Q')) / ||Q - Q'||_inf`` over random perturbations.

    Each perturbation draws every entry uniformly in ``[-magnitude, magnitude]``.
    """
    if magnitude <= 0:
        raise ValueError("magnitude must be positive")
    rng = np.random.default_rng(seed)
    base, _ = _solve(payoff, cfg)
    worst = 0.0
    for _ in range(num_perturbations):
        delta = rng.uniform(-magnitude, magnitude, size=payoff.tensors.shape)
        other, _ = _solve(StagePayoff(payoff.tensors + delta), cfg)
        worst = max(worst, profile_distance(base, other) / np.abs(delta).max())
    return worst


def _solve(payoff, cfg):
    profile, diag = rqre_solve(payoff, cfg)
    if not diag.certified:
        raise RuntimeError(
            f"stage solve did not certify (exploitability {diag.max_exploitability:.3e})"
        )
    return profile, diag


def alpha_sweep_ratio(cfg: SolverConfig, alphas) -> float:
    """Max difference quotient of the RQRE map along the coordination family ``Q(alpha)``."""
    alphas = np.asarray(alphas, float)
    profiles = [_solve(coordination_game(a), cfg)[0] for a in alphas]
    ratios = [
        profile_distance(p, q) / abs(a - b)
        for p, q, a, b in zip(profiles, profiles[1:], alphas, alphas[1:])
    ]
    return max(ratios)


@dataclass(frozen=True)
class InstabilityRow:
    eps_pert: float
    alpha_gap: float
    nash_jump: float
    nash_lipschitz: float
    rqre_change: float
    rqre_ratio: float


def nash_instability_demo(epsilon_pert_values, cfg: SolverConfig | None = None) -> list[InstabilityRow]:
    """Compare Nash selection and RQRE across ``Q(1 - e)`` and ``Q(1 + e)``."""
    cfg = cfg or SolverConfig(epsilon=1.0, tau=0.0, tol=1e-12, max_iters=5000)
    rows = []
    for e in epsilon_pert_values:
        if e <= 0:
            raise ValueError("perturbation sizes must be positive")
        lo, hi = coordination_game(1 - e), coordination_game(1 + e)
        gap = float(np.abs(lo.tensors - hi.tensors).max())
        jump = profile_distance(nash_selection(1 - e), nash_selection(1 + e))
        change = profile_distance(_solve(lo, cfg)[0], _solve(hi, cfg)[0])
        rows.append(InstabilityRow(e, gap, jump, jump / gap, change, change / gap))
    return rows


def format_table(rows: list[InstabilityRow]) -> str:
    head = f"{'eps_pert':>10} {'alpha_gap':>10} {'nash_jump':>10} {'nash_L':>10} {'rqre_change':>12} {'rqre_L':>8}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r.eps_pert:>10.4g} {r.alpha_gap:>10.4g} {r.nash_jump:>10.4g} "
            f"{r.nash_lipschitz:>10.4g} {r.rqre_change:>12.4e} {r.rqre_ratio:>8.4f}"
        )
    return "\n".join(lines)
