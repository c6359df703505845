"""Convex risk measures on finite loss distributions and their sample estimators.

Every function here acts on LOSSES: larger outcomes are worse and a risk
measure is monotone nondecreasing in the loss. Callers holding utilities or
values negate them first, e.g. the risk-averse evaluation of a value
variable ``V`` is ``-entropic_risk(-V)``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

_WEIGHT_TOL = 1e-12


class RiskKind(str, enum.Enum):
    RISK_NEUTRAL = "RiskNeutral"
    ENTROPIC = "Entropic"
    CVAR = "CVaR"
    FINITE_DUAL = "FiniteDual"


def _as_outcomes(outcomes) -> np.ndarray:
    """Float array when the outcomes are numeric, else an object array of labels."""
    try:
        return np.asarray(outcomes, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        out = np.empty(len(outcomes), dtype=object)
        out[:] = list(outcomes)
        return out


@dataclass(frozen=True)
class FiniteDistribution:
    """A discrete distribution with real-valued (or label) outcomes."""

    outcomes: np.ndarray
    weights: np.ndarray

    def __init__(self, outcomes, weights=None):
        outcomes = _as_outcomes(outcomes)
        if weights is None:
            if outcomes.size == 0:
                raise ValueError("distribution needs at least one outcome")
            weights = np.full(outcomes.size, 1.0 / outcomes.size)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if outcomes.shape != weights.shape:
            raise ValueError(
                f"outcomes and weights differ in length: {outcomes.size} vs {weights.size}"
            )
        if outcomes.size == 0:
            raise ValueError("distribution needs at least one outcome")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        if outcomes.dtype.kind == "f" and not np.all(np.isfinite(outcomes)):
            raise ValueError("outcomes must be finite")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, outcomes) -> FiniteDistribution:
        return cls(outcomes)

    @classmethod
    def point_mass(cls, outcome: float) -> FiniteDistribution:
        return cls([outcome], [1.0])

    def mean(self) -> float:
        return float(self.weights @ self.outcomes)

    def __len__(self) -> int:
        return self.outcomes.size


@dataclass(frozen=True)
class RiskSpec:
    """Tagged choice of risk measure.

    ``dual_set`` holds ``(distribution, penalty)`` pairs whose distributions
    live on a shared outcome-label space; it is only used by ``FiniteDual``.
    """

    kind: RiskKind = RiskKind.RISK_NEUTRAL
    tau: float | None = None
    alpha: float | None = None
    dual_set: tuple[tuple[FiniteDistribution, float], ...] | None = field(default=None)

    def __post_init__(self):
        kind = RiskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is RiskKind.ENTROPIC:
            if self.tau is None or not self.tau > 0:
                raise ValueError("Entropic risk requires tau > 0")
        elif self.tau is not None:
            raise ValueError(f"tau is not a parameter of {kind.value}")
        if kind is RiskKind.CVAR:
            if self.alpha is None or not 0 < self.alpha < 1:
                raise ValueError("CVaR requires 0 < alpha < 1")
        elif self.alpha is not None:
            raise ValueError(f"alpha is not a parameter of {kind.value}")
        if kind is RiskKind.FINITE_DUAL:
            if not self.dual_set:
                raise ValueError("FiniteDual requires a nonempty dual_set")
            object.__setattr__(
                self, "dual_set", tuple((p, float(pen)) for p, pen in self.dual_set)
            )
        elif self.dual_set is not None:
            raise ValueError(f"dual_set is not a parameter of {kind.value}")

    @classmethod
    def neutral(cls) -> RiskSpec:
        return cls(RiskKind.RISK_NEUTRAL)

    @classmethod
    def entropic(cls, tau: float) -> RiskSpec:
        return cls(RiskKind.ENTROPIC, tau=tau)

    @classmethod
    def cvar(cls, alpha: float) -> RiskSpec:
        return cls(RiskKind.CVAR, alpha=alpha)

    @classmethod
    def finite_dual(cls, dual_set) -> RiskSpec:
        return cls(RiskKind.FINITE_DUAL, dual_set=tuple(dual_set))


# ---------------------------------------------------------------------------
# array kernels


def entropic_values(values: np.ndarray, weights: np.ndarray, tau: float, axis: int = -1):
    """(1/tau) log E[exp(tau Z)] along ``axis``, max-shifted.

    Zero-weight outcomes are ignored. Result is clamped into the support range
    so roundoff never leaves [min Z, max Z].
    """
    values = np.asarray(values, dtype=float)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), values.shape)
    support = weights > 0
    scaled = np.where(support, tau * values, -np.inf)
    shift = np.max(scaled, axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        total = np.sum(np.where(support, weights * np.exp(scaled - shift), 0.0), axis=axis)
    out = (np.squeeze(shift, axis=axis) + np.log(total)) / tau
    lo = np.min(np.where(support, values, np.inf), axis=axis)
    hi = np.max(np.where(support, values, -np.inf), axis=axis)
    return np.clip(out, lo, hi)


def cvar_values(values: np.ndarray, weights: np.ndarray, alpha: float) -> float:
    """Mean of the top ``1 - alpha`` probability mass of a 1-d loss distribution."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values)[::-1]
    v, w = values[order], weights[order]
    tail = 1.0 - alpha
    taken = np.minimum(w, np.maximum(tail - (np.cumsum(w) - w), 0.0))
    return float(taken @ v / tail)


def risk_of(spec: RiskSpec, values, weights=None) -> float:
    """Risk of the loss distribution ``values`` (probabilities ``weights``).

    For ``FiniteDual`` the candidate distributions of ``spec.dual_set`` are
    read positionally: candidate ``j`` puts ``p_j.weights[k]`` on ``values[k]``.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    kind = spec.kind
    if kind is RiskKind.RISK_NEUTRAL:
        return float(weights @ values)
    if kind is RiskKind.ENTROPIC:
        return float(entropic_values(values, weights, spec.tau))
    if kind is RiskKind.CVAR:
        return cvar_values(values, weights, spec.alpha)
    best = -math.inf
    for p, penalty in spec.dual_set:
        if p.weights.size != values.size:
            raise ValueError("dual distribution does not match the loss support")
        best = max(best, float(p.weights @ values) - penalty)
    return best


# ---------------------------------------------------------------------------
# public operations


def entropic_risk(dist: FiniteDistribution, tau: float) -> float:
    """Entropic risk ``(1/tau) log E[exp(tau Z)]`` of a loss distribution."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return float(entropic_values(dist.outcomes, dist.weights, tau))


def empirical_entropic(samples: Sequence[float], tau: float) -> float:
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("empirical_entropic needs at least one sample")
    return entropic_risk(FiniteDistribution(samples), tau)


def empirical_cvar(samples: Sequence[float], alpha: float) -> float:
    """Empirical CVaR: the mean of the top ``(1 - alpha)`` mass of the samples.

    Uses the mass-weighted tail, so a partially covered order statistic
    contributes fractionally. This differs from summing order statistics from
    index ``ceil(alpha * m)`` by at most ``(max - min) / m``.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("empirical_cvar needs at least one sample")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return cvar_values(samples, np.full(samples.size, 1.0 / samples.size), alpha)


def cvar(dist: FiniteDistribution, alpha: float) -> float:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return cvar_values(dist.outcomes, dist.weights, alpha)


def _lookup(loss, outcome):
    if loss is None:
        return outcome
    if callable(loss) and not isinstance(loss, Mapping):
        return float(loss(outcome))
    try:
        return float(loss[outcome])
    except KeyError:
        pass
    if float(outcome).is_integer() and int(outcome) in loss:
        return float(loss[int(outcome)])
    raise ValueError(f"outcome {outcome!r} lies outside the loss support")


def finite_dual_risk(
    loss: Mapping | Callable | None,
    dual_set: Sequence[tuple[FiniteDistribution, float]],
) -> float:
    """max_j { E_{p_j}[Z] - D(p_j) } over a finite candidate set.

    ``loss`` maps each candidate's outcome labels to loss values; ``None``
    means the labels are the loss values themselves.
    """
    if not dual_set:
        raise ValueError("dual_set must be nonempty")
    best = -math.inf
    for p, penalty in dual_set:
        z = np.array([_lookup(loss, o) for o in p.outcomes])
        best = max(best, float(p.weights @ z) - float(penalty))
    return best


def kl_dual_grid(base: FiniteDistribution, tau: float, resolution: int):
    """Simplex lattice over the support of ``base`` (``resolution`` steps per
    coordinate), each point penalised by (1/tau) KL(p || base)."""
    k = len(base)
    dual = []
    for counts in _compositions(resolution, k):
        w = np.asarray(counts, dtype=float) / resolution
        nz = w > 0
        kl = float(np.sum(w[nz] * np.log(w[nz] / base.weights[nz])))
        dual.append((FiniteDistribution(base.outcomes, w), kl / tau))
    return dual


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def env_risk_estimate(
    continuation: Mapping | Callable,
    empirical_kernel: FiniteDistribution,
    spec: RiskSpec,
) -> float:
    """Risk of the continuation loss under an empirical next-state kernel.

    ``continuation`` maps next-state labels (the kernel's outcomes) to loss
    values. RiskNeutral is the plain expectation, Entropic the closed-form
    log-sum-exp under the kernel, CVaR the kernel-weighted tail mean.
    FiniteDual reads ``spec.dual_set`` as candidate kernels over the same
    labels and returns ``max_m {E_m[Z] - penalty_m}``; applied to negated
    values this is the environment-side ``inf {E[V] + penalty}`` form.
    """
    if len(empirical_kernel) == 0:
        raise ValueError("empirical kernel has empty support")
    if spec.kind is RiskKind.FINITE_DUAL:
        return finite_dual_risk(continuation, spec.dual_set)
    z = np.array([_lookup(continuation, o) for o in empirical_kernel.outcomes])
    return risk_of(spec, z, empirical_kernel.weights)


# ---------------------------------------------------------------------------
# axiom checks


@dataclass(frozen=True)
class AxiomReport:
    convexity: bool
    monotonicity: bool
    translation_invariance: bool
    worst_convexity_violation: float
    worst_monotonicity_violation: float
    worst_translation_error: float

    @property
    def all_pass(self) -> bool:
        return self.convexity and self.monotonicity and self.translation_invariance


def risk_axiom_suite(
    spec: RiskSpec,
    probes: int = 1000,
    seed: int = 0,
    tol: float = 1e-9,
    support_size: int = 5,
) -> AxiomReport:
    """Randomised convexity / monotonicity / translation-invariance probes.

    Random variables are loss vectors on a shared finite sample space with a
    random base measure (for FiniteDual, the dual set fixes the sample space).
    """
    rng = np.random.default_rng(seed)
    if spec.kind is RiskKind.FINITE_DUAL:
        support_size = len(spec.dual_set[0][0])
    conv = mono = trans = 0.0
    for _ in range(probes):
        p = rng.dirichlet(np.ones(support_size))
        x = rng.normal(scale=3.0, size=support_size)
        y = rng.normal(scale=3.0, size=support_size)
        lam = rng.uniform()
        c = rng.normal(scale=5.0)
        rx, ry = risk_of(spec, x, p), risk_of(spec, y, p)
        conv = max(conv, risk_of(spec, lam * x + (1 - lam) * y, p) - (lam * rx + (1 - lam) * ry))
        bigger = x + rng.exponential(size=support_size)
        mono = max(mono, rx - risk_of(spec, bigger, p))
        trans = max(trans, abs(risk_of(spec, x + c, p) - rx - c))
    return AxiomReport(conv <= tol, mono <= tol, trans <= tol, conv, mono, trans)


def homogeneity_gap(spec: RiskSpec, dist: FiniteDistribution, scale: float = 2.0) -> float:
    """|rho(scale * Z) - scale * rho(Z)|; zero for every positively homogeneous measure."""
    scaled = FiniteDistribution(scale * dist.outcomes, dist.weights)
    return abs(risk_of(spec, scaled.outcomes, scaled.weights) - scale * risk_of(spec, dist.outcomes, dist.weights))
