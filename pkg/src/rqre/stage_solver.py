"""Stage-game RQRE: entropic policy risk plus entropy-regularised quantal response.

Player ``i`` in an ``n``-player normal-form game with utility tensor ``u_i``
maximises

    V_i(pi) = -(1/tau_i) log sum_{a_-i} pi_-i(a_-i) exp(-tau_i u_i^pi(a_-i))
              + (1/eps_i) H(pi_i),          u_i^pi(a_-i) = sum_{a_i} pi_i(a_i) u_i(a_i, a_-i)

with ``H`` the Shannon entropy and the ``tau_i = 0`` case read as the plain
expectation. The risk term equals ``min_p {<pi_i, u_i p> + (1/tau) KL(p || pi_-i)}``;
the minimising ``p`` (the "tilt") is ``pi_-i * exp(-tau u_i^pi)`` normalised,
and the first-order condition of player ``i`` is ``pi_i = softmax(eps_i * g_i)``
with ``g_i(a_i) = sum_{a_-i} p(a_-i) u_i(a_i, a_-i)``.

All kernels take payoffs batched as ``(B, n, A_1, ..., A_n)`` and profiles as
lists of ``(B, A_j)`` arrays.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    FIXED_POINT = "FixedPoint"
    MIRROR_ASCENT = "MirrorAscent"
    HEDGE_LIFTED = "HedgeLifted"


@dataclass(frozen=True)
class StagePayoff:
    """Per-player utility tensors over the joint action space, shape ``(n, A_1, ..., A_n)``."""

    tensors: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensors, dtype=float)
        if t.ndim < 2 or t.shape[0] != t.ndim - 1:
            raise ValueError(
                f"expected tensors of shape (n, A_1, ..., A_n), got {t.shape}"
            )
        if not np.all(np.isfinite(t)):
            raise ValueError("utilities must be finite")
        object.__setattr__(self, "tensors", t)

    @property
    def n(self) -> int:
        return self.tensors.shape[0]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.tensors.shape[1:]

    @classmethod
    def bimatrix(cls, row, col) -> StagePayoff:
        return cls(np.stack([np.asarray(row, float), np.asarray(col, float)]))

    @classmethod
    def symmetric(cls, matrix) -> StagePayoff:
        m = np.asarray(matrix, float)
        return cls.bimatrix(m, m.T)

    def shifted(self, player: int, c: float) -> StagePayoff:
        t = self.tensors.copy()
        t[player] += c
        return StagePayoff(t)


@dataclass(frozen=True)
class SolverConfig:
    epsilon: tuple[float, ...] | float = 1.0
    tau: tuple[float, ...] | float = 0.0
    method: Method = Method.FIXED_POINT
    max_iters: int = 1000
    tol: float = 1e-8
    damping: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        eps = np.atleast_1d(np.asarray(self.epsilon, float))
        tau = np.atleast_1d(np.asarray(self.tau, float))
        if np.any(eps <= 0):
            raise ValueError("epsilon must be positive")
        if np.any(tau < 0):
            raise ValueError("tau must be nonnegative (risk-seeking players are unsupported)")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        object.__setattr__(self, "epsilon", tuple(eps.tolist()) if eps.size > 1 else float(eps[0]))
        object.__setattr__(self, "tau", tuple(tau.tolist()) if tau.size > 1 else float(tau[0]))

    def eps_for(self, n: int) -> np.ndarray:
        return _per_player(self.epsilon, n, "epsilon")

    def tau_for(self, n: int) -> np.ndarray:
        return _per_player(self.tau, n, "tau")


def _per_player(value, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, float))
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size != n:
        raise ValueError(f"{name} has {arr.size} entries for {n} players")
    return arr


@dataclass
class Diagnostics:
    method: Method
    iterations: int
    exploitability: np.ndarray
    residual: float
    certified: bool
    trace: list[float] = field(default_factory=list)

    @property
    def max_exploitability(self) -> float:
        return float(np.max(self.exploitability)) if self.exploitability.size else 0.0


class NonConvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


# ---------------------------------------------------------------------------
# batched kernels


def logsumexp(x, axis, keepdims=False):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def softmax(x, axis=-1):
    z = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def _expand(dist: np.ndarray, j: int, n: int) -> np.ndarray:
    shape = [dist.shape[0]] + [1] * n
    shape[1 + j] = dist.shape[1]
    return dist.reshape(shape)


def _opponents(profile: list[np.ndarray], i: int) -> np.ndarray:
    """Product distribution of everyone but ``i``; broadcastable, axis ``i`` of size 1."""
    n = len(profile)
    out = np.ones([profile[0].shape[0]] + [1] * n)
    for j in range(n):
        if j != i:
            out = out * _expand(profile[j], j, n)
    return out


def _joint_axes(n: int) -> tuple[int, ...]:
    return tuple(range(1, n + 1))


def _other_axes(n: int, i: int) -> tuple[int, ...]:
    return tuple(1 + j for j in range(n) if j != i)


def _risk_term(Qi, own, opp, i, tau):
    """Risk-adjusted payoff of player ``i`` and the tilted opponent distribution."""
    n = Qi.ndim - 1
    u = np.sum(_expand(own, i, n) * Qi, axis=1 + i, keepdims=True)
    if tau == 0:
        return np.sum(opp * u, axis=_joint_axes(n)), opp
    with np.errstate(divide="ignore"):
        logits = np.log(opp) - tau * u
    lse = logsumexp(logits, axis=_joint_axes(n), keepdims=True)
    tilt = np.exp(logits - lse)
    return -lse.reshape(-1) / tau, tilt


def _gradient(Qi, tilt, i):
    n = Qi.ndim - 1
    return np.sum(tilt * Qi, axis=_other_axes(n, i))


def _entropy(dist):
    return -np.sum(xlogy(dist, dist), axis=-1)


def _value(Qi, own, opp, i, eps, tau):
    risk, _ = _risk_term(Qi, own, opp, i, tau)
    return risk + _entropy(own) / eps


def _residuals(Q, profile, eps, tau):
    """Per-player l1 distance between ``pi_i`` and ``softmax(eps_i g_i(pi))``, shape (B, n)."""
    n = len(profile)
    out = np.empty((profile[0].shape[0], n))
    for i in range(n):
        opp = _opponents(profile, i)
        _, tilt = _risk_term(Q[:, i], profile[i], opp, i, tau[i])
        target = softmax(eps[i] * _gradient(Q[:, i], tilt, i), axis=-1)
        out[:, i] = np.abs(profile[i] - target).sum(axis=-1)
    return out


def _flatten_player(Qi, opp, i):
    """Utility as ``(B, k_i, M)`` and opponent distribution as ``(B, M)`` over joint opponent actions."""
    batch, k = Qi.shape[0], Qi.shape[1 + i]
    U = np.moveaxis(Qi, 1 + i, 1).reshape(batch, k, -1)
    q = np.moveaxis(np.broadcast_to(opp, Qi.shape[:1 + i] + (1,) + Qi.shape[2 + i:]), 1 + i, 1)
    return U, q.reshape(batch, -1)


def _flat_objective(U, logq, pi, eps, tau):
    s = np.einsum("bkm,bk->bm", U, pi)
    logits = logq - tau * s
    lse = logsumexp(logits, axis=-1, keepdims=True)
    return -lse[:, 0] / tau + _entropy(pi) / eps, np.exp(logits - lse)


def _best_response_batch(Q, profile, i, eps, tau, tol, max_steps, init=None):
    """Smoothed best response of player ``i`` for each game in the batch.

    Returns ``(dist, residual, steps)``. For ``tau = 0`` this is the exact
    logit response. Otherwise the objective is strictly concave in ``pi_i``
    and is maximised by Newton steps on the simplex (equality-constrained
    KKT system), with a fraction-to-boundary cap and Armijo backtracking.
    """
    Qi = Q[:, i]
    opp = _opponents(profile, i)
    if tau == 0:
        g = _gradient(Qi, opp, i)
        return softmax(eps * g, axis=-1), np.zeros(Qi.shape[0]), 0
    U, q = _flatten_player(Qi, opp, i)
    with np.errstate(divide="ignore"):
        logq = np.log(q)
    batch, k = U.shape[0], U.shape[1]
    pi = np.full((batch, k), 1.0 / k) if init is None else np.array(init, dtype=float)
    pi = np.maximum(pi, 1e-300)
    pi /= pi.sum(axis=-1, keepdims=True)
    residual = np.full(batch, np.inf)
    kkt = np.zeros((batch, k + 1, k + 1))
    kkt[:, :k, k] = 1.0
    kkt[:, k, :k] = 1.0
    rhs = np.zeros((batch, k + 1))
    best_res = np.full(batch, np.inf)
    stall = np.zeros(batch, int)
    steps = 0
    for steps in range(1, max_steps + 1):
        f, p = _flat_objective(U, logq, pi, eps, tau)
        g = np.einsum("bkm,bm->bk", U, p)
        residual = np.abs(pi - softmax(eps * g, axis=-1)).sum(axis=-1)
        # at roundoff level the residual stops halving; give up after 3 such steps
        stall = np.where(residual < 0.5 * best_res, 0, stall + 1)
        best_res = np.minimum(best_res, residual)
        active = (residual > tol) & (stall < 3)
        if not active.any():
            break
        up = U * p[:, None, :]
        hess = -tau * (np.einsum("bkm,bjm->bkj", up, U) - g[:, :, None] * g[:, None, :])
        hess[:, np.arange(k), np.arange(k)] -= 1.0 / (eps * pi)
        grad = g - (np.log(pi) + 1.0) / eps
        kkt[:, :k, :k] = hess
        rhs[:, :k] = -grad
        delta = np.linalg.solve(kkt, rhs[..., None])[:, :k, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(delta < 0, pi / -delta, np.inf).min(axis=-1)
        alpha = np.minimum(1.0, 0.99 * room)
        slope = np.einsum("bk,bk->b", grad, delta)
        accepted = ~active
        new = pi.copy()
        for _ in range(60):
            trial = np.maximum(pi + alpha[:, None] * delta, 1e-300)
            trial /= trial.sum(axis=-1, keepdims=True)
            ft, _ = _flat_objective(U, logq, trial, eps, tau)
            ok = ft >= f + 1e-4 * alpha * slope - 1e-15 * (1 + np.abs(f))
            take = ok & ~accepted
            new[take] = trial[take]
            accepted |= ok
            if accepted.all():
                break
            alpha = np.where(accepted, alpha, alpha / 2)
        if not (active & accepted).any():
            break
        pi = new
    return pi, residual, steps


def _exploitability_batch(Q, profile, eps, tau, tol=1e-13, max_steps=2000):
    """Per-game, per-player gap V_i(sBR_i, pi_-i) - V_i(pi), shape (B, n)."""
    n = len(profile)
    gaps = np.zeros((profile[0].shape[0], n))
    for i in range(n):
        if profile[i].shape[1] == 1:
            continue
        opp = _opponents(profile, i)
        if tau[i] == 0:
            # V(sBR) - V(pi) = KL(pi || softmax(eps g)) / eps, free of cancellation
            logits = eps[i] * _gradient(Q[:, i], opp, i)
            log_br = logits - logsumexp(logits, axis=-1, keepdims=True)
            pi = profile[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                kl = np.sum(np.where(pi > 0, pi * (np.log(pi) - log_br), 0.0), axis=-1)
            gaps[:, i] = np.maximum(kl, 0.0) / eps[i]
            continue
        current = _value(Q[:, i], profile[i], opp, i, eps[i], tau[i])
        br, _, _ = _best_response_batch(Q, profile, i, eps[i], tau[i], tol, max_steps, init=profile[i])
        gaps[:, i] = np.maximum(_value(Q[:, i], br, opp, i, eps[i], tau[i]) - current, 0.0)
    return gaps


def _uniform_profile(batch: int, counts) -> list[np.ndarray]:
    return [np.full((batch, k), 1.0 / k) for k in counts]


def _prox(pi, g, eta, eps):
    """argmax_p  eta <g, p> + (eta/eps) H(p) - KL(p || pi), per row."""
    return softmax((np.log(pi) + eta[:, None] * g) / (1 + eta[:, None] / eps), axis=-1)


def solve_batch(tensors: np.ndarray, cfg: SolverConfig, init=None, inner_steps: int = 500):
    """Solve a batch of stage games; ``tensors`` has shape ``(B, n, A_1, ..., A_n)``.

    Returns ``(profile, residual, iterations, trace)`` where ``residual`` is the
    per-game max-player first-order residual of the returned profile and
    ``trace`` the batch-max residual per iteration.
    """
    Q = np.asarray(tensors, dtype=float)
    batch, n, counts = Q.shape[0], Q.shape[1], Q.shape[2:]
    eps, tau = cfg.eps_for(n), cfg.tau_for(n)
    profile = _uniform_profile(batch, counts) if init is None else [np.array(p, float) for p in init]
    if cfg.method is Method.FIXED_POINT:
        return _fixed_point(Q, profile, eps, tau, cfg, inner_steps)
    if cfg.method is Method.MIRROR_ASCENT:
        return _mirror_prox(Q, profile, eps, tau, cfg)
    return _hedge_lifted(Q, profile, eps, tau, cfg)


def _logit_gap(Q, profile, eps, tau):
    """Stacked ``center(log pi_i - eps_i g_i(pi))`` over players, shape (B, sum k_i)."""
    parts = []
    for i in range(len(profile)):
        _, tilt = _risk_term(Q[:, i], profile[i], _opponents(profile, i), i, tau[i])
        z = np.log(profile[i]) - eps[i] * _gradient(Q[:, i], tilt, i)
        parts.append(z - z.mean(axis=-1, keepdims=True))
    return np.concatenate(parts, axis=-1)


def _split(z, counts):
    return [softmax(block, axis=-1) for block in np.split(z, np.cumsum(counts)[:-1], axis=-1)]


def _newton_candidate(Q, profile, eps, tau, h=1e-7):
    """One Newton step on the logit-space first-order system (finite-difference Jacobian)."""
    counts = [p.shape[1] for p in profile]
    z = np.concatenate([np.log(p) - np.log(p).mean(axis=-1, keepdims=True) for p in profile], axis=-1)
    G = _logit_gap(Q, profile, eps, tau)
    D = z.shape[1]
    J = np.empty((z.shape[0], D, D))
    for c in range(D):
        zc = z.copy()
        zc[:, c] += h
        J[:, :, c] = (_logit_gap(Q, _split(zc, counts), eps, tau) - G) / h
    # logits are defined up to a per-player constant; pin that direction
    start = 0
    for k in counts:
        J[:, start:start + k, start:start + k] += 1.0 / k
        start += k
    try:
        step = np.linalg.solve(J, -G[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(step)):
        return None
    return z, step, counts


def _fixed_point(Q, profile, eps, tau, cfg, inner_steps):
    """Damped smoothed-best-response iteration with a Newton correction.

    Each round first tries a Newton step on the first-order system and keeps
    it for every game where it cuts the residual by 10%; the remaining games
    take the damped step ``pi <- (1 - d) pi + d sBR(pi)``. A game whose best
    residual fails to halve over 50 rounds has its ``d`` halved (floor 1/64).
    Games leave the working set as soon as they reach ``cfg.tol``.
    """
    n = len(profile)
    trace = []
    best = [p.copy() for p in profile]
    best_res = np.full(Q.shape[0], np.inf)
    it = 0
    inner_tol = cfg.tol * 1e-2
    damping = np.full(Q.shape[0], cfg.damping)
    checkpoint = np.full(Q.shape[0], np.inf)
    active = np.arange(Q.shape[0])

    def record(idx, sub):
        res = _residuals(Q[idx], sub, eps, tau).max(axis=1)
        improved = res < best_res[idx]
        for j in range(n):
            best[j][idx[improved]] = sub[j][improved]
        best_res[idx] = np.minimum(best_res[idx], res)
        return res

    for it in range(1, cfg.max_iters + 1):
        sub = [p[active] for p in profile]
        res = record(active, sub)
        trace.append(float(best_res.max()))
        keep = res > cfg.tol
        active, res, sub = active[keep], res[keep], [p[keep] for p in sub]
        if active.size == 0:
            break
        if it % 50 == 0:
            # no halving of the best residual in 50 rounds: the damped map is cycling
            stuck = best_res[active] > 0.5 * checkpoint[active]
            damping[active] = np.where(stuck, np.maximum(damping[active] / 2, 1 / 64), damping[active])
            checkpoint[active] = best_res[active]
        sub_Q = Q[active]
        newton = np.zeros(active.size, bool)
        cand = _newton_candidate(sub_Q, sub, eps, tau)
        if cand is not None:
            z, step, counts = cand
            for scale in (1.0, 0.5, 0.25):
                trial = _split(z + scale * step, counts)
                trial = [np.maximum(t, 1e-300) / np.maximum(t, 1e-300).sum(axis=-1, keepdims=True) for t in trial]
                tres = _residuals(sub_Q, trial, eps, tau).max(axis=1)
                take = ~newton & (tres <= 0.9 * res)
                for j in range(n):
                    sub[j][take] = trial[j][take]
                newton |= take
                if newton.all():
                    break
        rest = np.flatnonzero(~newton)
        if rest.size:
            rq = sub_Q[rest]
            rs = [p[rest] for p in sub]
            responses = [
                _best_response_batch(rq, rs, i, eps[i], tau[i], inner_tol, inner_steps, init=rs[i])[0]
                for i in range(n)
            ]
            d = damping[active[rest], None]
            for j in range(n):
                sub[j][rest] = (1 - d) * rs[j] + d * responses[j]
        for j in range(n):
            profile[j][active] = sub[j]
    else:
        if active.size:
            record(active, [p[active] for p in profile])
    return best, best_res, it, trace


def _mirror_prox(Q, profile, eps, tau, cfg):
    """Extragradient with the entropy mirror map; the entropy term enters the prox step."""
    n = len(profile)
    scale = np.abs(Q.reshape(Q.shape[0], -1)).max(axis=1)
    lip = np.maximum(scale * (1 + tau.max() * scale), 1e-12)
    eta = 1.0 / lip
    trace = []
    it = 0
    res = _residuals(Q, profile, eps, tau).max(axis=1)
    for it in range(1, cfg.max_iters + 1):
        trace.append(float(res.max()))
        if res.max() <= cfg.tol:
            break
        grads = [_gradient(Q[:, i], _risk_term(Q[:, i], profile[i], _opponents(profile, i), i, tau[i])[1], i) for i in range(n)]
        half = [_prox(profile[i], grads[i], eta, eps[i]) for i in range(n)]
        grads = [_gradient(Q[:, i], _risk_term(Q[:, i], half[i], _opponents(half, i), i, tau[i])[1], i) for i in range(n)]
        profile = [_prox(profile[i], grads[i], eta, eps[i]) for i in range(n)]
        res = _residuals(Q, profile, eps, tau).max(axis=1)
    return profile, res, it, trace


def _hedge_lifted(Q, profile, eps, tau, cfg):
    """Hedge for every player of the lifted 2n-player game; returns averaged marginals.

    Player ``i`` receives the gradient of ``<pi_i, u_i p_i> + (1/eps_i) H(pi_i)``
    as its reward vector; adversary ``i`` (present when ``tau_i > 0``) plays
    ``p_i`` over joint opponent actions and receives the gradient of
    ``<pi_i, u_i p_i> + (1/tau_i) KL(p_i || pi_-i)`` as its loss vector.
    """
    n = len(profile)
    T = cfg.max_iters
    counts = [p.shape[1] for p in profile]
    batch = Q.shape[0]
    eta_player = [np.sqrt(8 * np.log(k) / T) for k in counts]
    cum_reward = [np.zeros_like(p) for p in profile]
    adversary = {}
    cum_loss = {}
    for i in range(n):
        if tau[i] > 0:
            full = [batch] + [1 if j == i else counts[j] for j in range(n)]
            size = int(np.prod(full[1:]))
            adversary[i] = (np.full(full, 1.0 / size), np.sqrt(8 * np.log(size) / T))
            cum_loss[i] = np.zeros(full)
    total = [np.zeros_like(p) for p in profile]
    trace = []
    for t in range(1, T + 1):
        for j in range(n):
            total[j] += profile[j]
        rewards, losses = [], {}
        for i in range(n):
            opp = _opponents(profile, i)
            Qi = Q[:, i]
            if i in adversary:
                p = adversary[i][0]
                u = np.sum(_expand(profile[i], i, n) * Qi, axis=1 + i, keepdims=True)
                with np.errstate(divide="ignore"):
                    losses[i] = u + (np.log(p) - np.log(opp) + 1) / tau[i]
            else:
                p = opp
            g = _gradient(Qi, p, i)
            rewards.append(g - (np.log(profile[i]) + 1) / eps[i])
        for i in range(n):
            cum_reward[i] += rewards[i]
            profile[i] = softmax(eta_player[i] * cum_reward[i], axis=-1)
        for i, loss in losses.items():
            cum_loss[i] += loss
            logits = -adversary[i][1] * cum_loss[i]
            lse = logsumexp(logits, axis=_joint_axes(n), keepdims=True)
            adversary[i] = (np.exp(logits - lse), adversary[i][1])
        if t & (t - 1) == 0 or t == T:
            avg = [s / t for s in total]
            trace.append(float(_residuals(Q, avg, eps, tau).max()))
    avg = [s / T for s in total]
    res = _residuals(Q, avg, eps, tau).max(axis=1)
    return avg, res, T, trace


# ---------------------------------------------------------------------------
# public operations


def _as_batch(payoff: StagePayoff) -> np.ndarray:
    return payoff.tensors[None]


def _as_profile(profile, counts) -> list[np.ndarray]:
    out = []
    for p, k in zip(profile, counts):
        p = np.asarray(p, float).reshape(1, -1)
        if p.shape[1] != k:
            raise ValueError(f"distribution of length {p.shape[1]} for a player with {k} actions")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-10:
            raise ValueError("profile entries must be distributions")
        out.append(p)
    return out


def policy_risk_value(payoff: StagePayoff, profile, player: int, cfg: SolverConfig) -> float:
    """Closed-form regularised risk value ``V_i`` of a mixed profile."""
    Q = _as_batch(payoff)
    prof = _as_profile(profile, payoff.action_counts)
    eps, tau = cfg.eps_for(payoff.n), cfg.tau_for(payoff.n)
    opp = _opponents(prof, player)
    return float(_value(Q[:, player], prof[player], opp, player, eps[player], tau[player])[0])


def smoothed_best_response(payoff: StagePayoff, opponents, player: int, cfg: SolverConfig) -> np.ndarray:
    """Maximiser of ``V_i(., pi_-i)`` over the simplex of ``player``.

    ``opponents`` is a full-length profile; its entry for ``player`` is ignored
    and may be ``None``. Raises ``NonConvergence`` if the mirror ascent does
    not reach ``cfg.tol`` within ``cfg.max_iters`` steps.
    """
    counts = payoff.action_counts
    filled = [np.full(k, 1.0 / k) if (j == player or p is None) else p for j, (p, k) in enumerate(zip(opponents, counts))]
    prof = _as_profile(filled, counts)
    eps, tau = cfg.eps_for(payoff.n), cfg.tau_for(payoff.n)
    br, residual, _ = _best_response_batch(
        _as_batch(payoff), prof, player, eps[player], tau[player], cfg.tol, cfg.max_iters
    )
    if residual[0] > cfg.tol:
        raise NonConvergence(
            f"smoothed best response stalled at residual {residual[0]:.3e}", float(residual[0])
        )
    return br[0]


def exploitability(payoff: StagePayoff, profile, cfg: SolverConfig) -> tuple[np.ndarray, float]:
    """Per-player gaps ``V_i(sBR_i(pi_-i), pi_-i) - V_i(pi)`` and their maximum."""
    prof = _as_profile(profile, payoff.action_counts)
    n = payoff.n
    gaps = _exploitability_batch(_as_batch(payoff), prof, cfg.eps_for(n), cfg.tau_for(n))[0]
    return gaps, float(gaps.max()) if gaps.size else 0.0


def rqre_solve(payoff: StagePayoff, cfg: SolverConfig, init=None) -> tuple[list[np.ndarray], Diagnostics]:
    """Stage RQRE of ``payoff``; starts from the uniform profile unless ``init`` is given.

    Never raises on non-convergence: the best iterate is returned with
    ``Diagnostics.certified`` false.
    """
    init_b = None if init is None else _as_profile(init, payoff.action_counts)
    prof, residual, iters, trace = solve_batch(_as_batch(payoff), cfg, init=init_b)
    profile = [p[0] for p in prof]
    gaps, worst = exploitability(payoff, profile, cfg)
    certified = bool(worst <= cfg.tol)
    if not certified:
        log.info("stage solve not certified: exploitability %.3e after %d iterations", worst, iters)
    diag = Diagnostics(cfg.method, iters, gaps, float(residual[0]), certified, trace)
    return profile, diag


def batch_values(tensors: np.ndarray, profile, cfg: SolverConfig) -> np.ndarray:
    """Regularised risk values ``V_i`` of a batch of profiles, shape (B, n)."""
    Q = np.asarray(tensors, float)
    n = Q.shape[1]
    eps, tau = cfg.eps_for(n), cfg.tau_for(n)
    out = np.empty((Q.shape[0], n))
    for i in range(n):
        out[:, i] = _value(Q[:, i], profile[i], _opponents(profile, i), i, eps[i], tau[i])
    return out


def batch_exploitability(tensors: np.ndarray, profile, cfg: SolverConfig) -> np.ndarray:
    """Per-game, per-player exploitability of a batch of profiles, shape (B, n)."""
    Q = np.asarray(tensors, float)
    n = Q.shape[1]
    return _exploitability_batch(Q, profile, cfg.eps_for(n), cfg.tau_for(n))
