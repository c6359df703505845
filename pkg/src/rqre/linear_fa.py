"""Linear function approximation: features, ridge designs, bonuses and clipping.

A ``RidgeDesign`` holds ``Lambda = lam I + sum phi phi^T`` together with one
target sum ``sum phi y_i`` per player, so every player's regression shares the
same Gram matrix. Optimistic estimates are

    Q_i(phi) = clip(w_i^T phi + beta sqrt(phi^T Lambda^-1 phi), 0, B).
"""

from __future__ import annotations

import io
import math
import struct
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

_NORM_SLACK = 1e-9


@dataclass(frozen=True)
class FeatureMap:
    """``evaluate(state, joint_action, h) -> (d,)`` with Euclidean norm at most 1."""

    dimension: int
    evaluate: Callable

    @classmethod
    def normalized(cls, dimension: int, raw: Callable, probes: Sequence) -> FeatureMap:
        """Scale ``raw`` by the largest norm over ``probes`` (triples of evaluate args), then clamp."""
        scale = max((float(np.linalg.norm(raw(*p))) for p in probes), default=1.0)
        scale = scale if scale > 0 else 1.0

        def evaluate(state, action, h):
            v = np.asarray(raw(state, action, h), float) / scale
            n = np.linalg.norm(v)
            return v / n if n > 1 else v

        return cls(dimension, evaluate)


@dataclass(frozen=True)
class OviHyper:
    beta: float = 0.1
    B_clip: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.beta < 0 or self.B_clip <= 0 or self.lam <= 0:
            raise ValueError("need beta >= 0, B_clip > 0 and lam > 0")


def value_cap(horizon: int, action_counts: Sequence[int], epsilon) -> float:
    """B = max_i H (1 + log|A_i| / eps_i), the largest regularised value."""
    eps = np.broadcast_to(np.asarray(epsilon, float), (len(action_counts),))
    return float(max(horizon * (1 + math.log(k) / e) for k, e in zip(action_counts, eps)))


@dataclass
class RidgeDesign:
    """Shared ridge design for ``n_players`` regressions on ``d`` features."""

    d: int
    n_players: int
    lam: float = 1.0
    gram: np.ndarray = None
    target_sums: np.ndarray = None
    count: int = 0
    _factor: tuple | None = field(default=None, repr=False, compare=False)
    _whiten: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("ridge lambda must be positive")
        if self.gram is None:
            self.gram = self.lam * np.eye(self.d)
        if self.target_sums is None:
            self.target_sums = np.zeros((self.n_players, self.d))
        self.gram = np.asarray(self.gram, float)
        self.target_sums = np.asarray(self.target_sums, float)
        if self.gram.shape != (self.d, self.d) or self.target_sums.shape != (self.n_players, self.d):
            raise ValueError("design arrays do not match (d, n_players)")

    @classmethod
    def from_data(cls, phis: np.ndarray, targets: np.ndarray, lam: float) -> RidgeDesign:
        """Batch design from ``phis`` (m, d) and per-player ``targets`` (m, n)."""
        phis = np.asarray(phis, float)
        targets = np.asarray(targets, float)
        m, d = phis.shape
        design = cls(d, targets.shape[1], lam)
        if m:
            design.gram += phis.T @ phis
            design.target_sums += targets.T @ phis
            design.count = m
        return design

    def update(self, phi, targets) -> RidgeDesign:
        """Absorb one transition in place; returns ``self`` for chaining."""
        phi = np.asarray(phi, float).reshape(-1)
        targets = np.asarray(targets, float).reshape(-1)
        if phi.size != self.d or targets.size != self.n_players:
            raise ValueError(
                f"expected phi of length {self.d} and {self.n_players} targets, "
                f"got {phi.size} and {targets.size}"
            )
        if np.linalg.norm(phi) > 1 + _NORM_SLACK:
            raise ValueError("features must have norm at most 1")
        self.gram += np.outer(phi, phi)
        self.target_sums += np.outer(targets, phi)
        self.count += 1
        self._factor = None
        self._whiten = None
        return self

    def _cho(self):
        if self._factor is None:
            self._factor = cho_factor(self.gram, lower=True, check_finite=False)
        return self._factor

    def whitener(self) -> np.ndarray:
        """``L^-1`` for ``Lambda = L L^T``, so ``phi^T Lambda^-1 phi = ||L^-1 phi||^2``."""
        if self._whiten is None:
            c, lower = self._cho()
            L = np.tril(c) if lower else np.triu(c).T
            self._whiten = solve_triangular(L, np.eye(self.d), lower=True, check_finite=False)
        return self._whiten

    def weights(self, player: int | None = None) -> np.ndarray:
        """Ridge solution ``Lambda^-1 sum phi y``; all players as (n, d) when ``player`` is None."""
        w = cho_solve(self._cho(), self.target_sums.T, check_finite=False).T
        return w if player is None else w[player]

    def inverse_quadratic(self, phis) -> np.ndarray:
        """``phi^T Lambda^-1 phi`` for a batch of features (..., d)."""
        phis = np.asarray(phis, float)
        white = phis.reshape(-1, self.d) @ self.whitener().T
        return np.einsum("md,md->m", white, white).reshape(phis.shape[:-1])

    def bonus(self, phis, beta: float) -> np.ndarray | float:
        out = beta * np.sqrt(self.inverse_quadratic(phis))
        return float(out) if np.ndim(out) == 0 else out

    def q_estimate(self, phis, hyper: OviHyper, with_bonus: bool = True, weights=None) -> np.ndarray:
        """Clipped estimates for all players, shape (n, ...) for features of shape (..., d)."""
        w = self.weights() if weights is None else weights
        phis = np.asarray(phis, float)
        q = np.einsum("nd,...d->n...", w, phis)
        if with_bonus and hyper.beta > 0:
            q = q + hyper.beta * np.sqrt(self.inverse_quadratic(phis))[None]
        return np.clip(q, 0.0, hyper.B_clip)

    def q_estimate_parts(self, parts, hyper: OviHyper, with_bonus: bool = True, weights=None) -> np.ndarray:
        """``q_estimate`` for features given as a sum of broadcastable parts.

        ``phi = sum_k parts[k]`` after broadcasting; each part is whitened on
        its own, which is much cheaper when parts carry fewer vectors than
        the full joint-action tensor.
        """
        w = self.weights() if weights is None else weights
        parts = [np.asarray(p, float) for p in parts]
        q = sum((p.reshape(-1, self.d) @ w.T).T.reshape(w.shape[0], *p.shape[:-1]) for p in parts)
        if with_bonus and hyper.beta > 0:
            T = self.whitener().T
            white = [(p.reshape(-1, self.d) @ T).reshape(p.shape) for p in parts]
            quad = 0.0
            # expand ||sum_k white_k||^2 pairwise so the joint tensor is never materialised
            for k, a in enumerate(white):
                for j in range(k, len(white)):
                    dot = np.einsum("...d,...d->...", a, white[j])
                    quad = quad + (dot if j == k else 2 * dot)
            q = q + hyper.beta * np.sqrt(np.maximum(quad, 0.0))[None]
        return np.clip(q, 0.0, hyper.B_clip)

    def check(self, tol: float = 1e-9) -> list[str]:
        """Invariant violations (empty when the design is valid)."""
        problems = []
        if not np.all(np.isfinite(self.gram)):
            return ["gram has non-finite entries"]
        asym = np.abs(self.gram - self.gram.T).max()
        if asym > 1e-12 * max(1.0, np.abs(self.gram).max()):
            problems.append(f"gram not symmetric (max asymmetry {asym:.3e})")
        lo = np.linalg.eigvalsh((self.gram + self.gram.T) / 2)[0]
        if lo < self.lam - tol:
            problems.append(f"smallest eigenvalue {lo:.6g} below lambda {self.lam:.6g}")
        return problems


def q_estimate(design: RidgeDesign, player: int, phi, hyper: OviHyper) -> float:
    """Single optimistic estimate ``min(w^T phi + bonus, B)`` floored at 0."""
    return float(design.q_estimate(np.asarray(phi, float), hyper)[player])


# ---------------------------------------------------------------------------
# elliptical potential


@dataclass(frozen=True)
class PotentialAudit:
    cumulative: float
    bound: float
    steps: int

    @property
    def passed(self) -> bool:
        return self.cumulative <= self.bound


def elliptical_potential_audit(phis, lam: float) -> PotentialAudit:
    """Sum of ``phi_k^T Lambda_k^-1 phi_k`` with ``Lambda_k = lam I + sum_{j<k} phi_j phi_j^T``.

    Compared against ``2 d log(1 + K / lam)``. Each term is capped at 1, which
    changes nothing for ``lam >= 1`` (then every term is at most 1 when
    ``||phi|| <= 1``) and keeps the bound valid for smaller ``lam``. Inverses
    are carried by Sherman-Morrison updates.
    """
    phis = np.asarray(phis, float)
    if phis.ndim != 2:
        raise ValueError("expected a (K, d) trace of features")
    K, d = phis.shape
    inv = np.eye(d) / lam
    total = 0.0
    for phi in phis:
        v = inv @ phi
        quad = float(phi @ v)
        total += min(quad, 1.0)
        inv -= np.outer(v, v) / (1.0 + quad)
    return PotentialAudit(total, 2 * d * math.log(1 + K / lam), K)


class PotentialTracker:
    """Streaming form of ``elliptical_potential_audit`` for one feature trace."""

    def __init__(self, d: int, lam: float):
        self.d = d
        self.lam = lam
        self.inv = np.eye(d) / lam
        self.cumulative = 0.0
        self.steps = 0

    def add(self, phi) -> float:
        phi = np.asarray(phi, float).reshape(-1)
        v = self.inv @ phi
        quad = float(phi @ v)
        self.cumulative += min(quad, 1.0)
        self.steps += 1
        self.inv -= np.outer(v, v) / (1.0 + quad)
        return quad

    def audit(self) -> PotentialAudit:
        bound = 2 * self.d * math.log(1 + self.steps / self.lam)
        return PotentialAudit(self.cumulative, bound, self.steps)


# ---------------------------------------------------------------------------
# checkpoint format

MAGIC = b"RQRECKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIdq")


def write_designs(path, designs: Sequence[RidgeDesign], episode: int) -> None:
    """Write per-stage designs as little-endian float64 blocks behind a versioned header.

    Header: magic, version, d, n_players, stages, lambda, episode. Each stage
    then stores count, Lambda (d*d), target sums (n*d) and weights (n*d).
    """
    if not designs:
        raise ValueError("no designs to write")
    d, n, lam = designs[0].d, designs[0].n_players, designs[0].lam
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, d, n, len(designs), lam, episode))
    for design in designs:
        if (design.d, design.n_players, design.lam) != (d, n, lam):
            raise ValueError("all stages must share d, player count and lambda")
        buf.write(np.asarray([design.count], "<f8").tobytes())
        buf.write(np.ascontiguousarray(design.gram, "<f8").tobytes())
        buf.write(np.ascontiguousarray(design.target_sums, "<f8").tobytes())
        buf.write(np.ascontiguousarray(design.weights(), "<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_designs(path) -> tuple[list[RidgeDesign], list[np.ndarray], int]:
    """Inverse of ``write_designs``: (designs, stored weights, episode)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, d, n, stages, lam, episode = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not an RQRE checkpoint")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    per_stage = 1 + d * d + 2 * n * d
    body = np.frombuffer(raw, "<f8", offset=_HEADER.size)
    if body.size != stages * per_stage:
        raise ValueError(f"{path}: expected {stages * per_stage} floats, found {body.size}")
    designs, weights = [], []
    for h in range(stages):
        block = body[h * per_stage : (h + 1) * per_stage]
        gram = block[1 : 1 + d * d].reshape(d, d).copy()
        sums = block[1 + d * d : 1 + d * d + n * d].reshape(n, d).copy()
        designs.append(RidgeDesign(d, n, lam, gram, sums, int(block[0])))
        weights.append(block[1 + d * d + n * d :].reshape(n, d).copy())
    return designs, weights, episode


__all__ = [
    "FeatureMap",
    "OviHyper",
    "PotentialAudit",
    "PotentialTracker",
    "RidgeDesign",
    "elliptical_potential_audit",
    "q_estimate",
    "read_designs",
    "value_cap",
    "write_designs",
]
