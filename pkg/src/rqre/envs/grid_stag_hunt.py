"""Two-agent grid Stag Hunt on a 9x9 board with a 75-step horizon.

Agents pick up a resource by walking over it and resolve an interaction when
both carry something, stand within Manhattan distance 1 (co-location counts)
and at least one of them plays ``interact``. Mutual stag pays (4, 4), mutual
hare (2, 2), and a stag carrier meeting a hare carrier gets 0 against 2.
After an interaction both agents respawn with empty inventories and the
board returns to its initial layout.

Observation (15 reals in [0, 1]):
    0-3   row/8, col/8 of agent 0 then agent 1
    4-7   nearest stag, nearest hare Manhattan distance / 16, agent 0 then 1
    8-11  has-stag, has-hare for agent 0 then agent 1
    12    inter-agent Manhattan distance / 16
    13    time step / 75
    14    bias (1)

Joint feature (200 reals), divided by ``FEATURE_SCALE``:
    0-14     observation
    15-26    one-hot action of agent 0, then agent 1
    27-104   one-hot action of agent 0 (x) observation[0:13], action-major
    105-182  one-hot action of agent 1 (x) observation[0:13], action-major
    183-198  indicator of the pair of movement actions (both in N, S, W, E)
    199      both agents play interact
"""

from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec

SIZE = 9
HORIZON = 75
NORTH, SOUTH, WEST, EAST, STAY, INTERACT = range(6)
N_ACTIONS = 6
MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1], [0, 0], [0, 0]])
EMPTY, STAG, HARE = 0, 1, 2
SPAWNS = ((4, 0), (4, 8))
STAGS = ((0, 0), (0, 8), (8, 0), (8, 8))
HARES = ((3, 0), (5, 0), (3, 8), (5, 8))
PAYOFF = {(STAG, STAG): (4.0, 4.0), (HARE, HARE): (2.0, 2.0), (STAG, HARE): (0.0, 2.0), (HARE, STAG): (2.0, 0.0)}
OBS_DIM = 15
FEATURE_DIM = 200
N_STATE = 13
MAX_DIST = 2 * (SIZE - 1)
# squared-norm budget: observation <= 4 + 4 + 2 + 1 + 1 + 1 = 13, action one-hots 2,
# two crosses <= 11 each, one pair/interact indicator 1
FEATURE_SCALE = float(np.sqrt(13 + 2 + 22 + 1))

_LAYOUT = np.zeros((SIZE, SIZE), np.int8)
for _r, _c in STAGS:
    _LAYOUT[_r, _c] = STAG
for _r, _c in HARES:
    _LAYOUT[_r, _c] = HARE


def _nearest(board: np.ndarray, kind: int, pos) -> float:
    rows, cols = np.nonzero(board == kind)
    if rows.size == 0:
        return 1.0
    return float(np.min(np.abs(rows - pos[0]) + np.abs(cols - pos[1]))) / MAX_DIST


class GridStagHunt(Env):
    """Dynamic Stag Hunt. ``step`` samples; no exact kernel is exposed."""

    name = "grid_stag_hunt"

    def __init__(self, seed: int = 0, horizon: int = HORIZON):
        self.spec = EnvSpec(
            n=2,
            action_counts=(N_ACTIONS, N_ACTIONS),
            horizon=horizon,
            d=FEATURE_DIM,
            reward_range=(0.0, 4.0),
            generative=False,
            obs_dim=OBS_DIM,
        )
        self._seed = seed
        self.rng = np.random.default_rng(seed)
        self.reset(seed)

    # -- state ---------------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.pos = np.array(SPAWNS, dtype=int)
        self.inv = np.zeros(2, dtype=int)
        self.board = _LAYOUT.copy()
        self.t = 0
        self._outcome = None
        return self.observe()

    def observe(self) -> np.ndarray:
        obs = np.empty(OBS_DIM)
        obs[0:4] = self.pos.reshape(-1) / (SIZE - 1)
        for i in range(2):
            obs[4 + 2 * i] = _nearest(self.board, STAG, self.pos[i])
            obs[5 + 2 * i] = _nearest(self.board, HARE, self.pos[i])
            obs[8 + 2 * i] = float(self.inv[i] == STAG)
            obs[9 + 2 * i] = float(self.inv[i] == HARE)
        obs[12] = np.abs(self.pos[0] - self.pos[1]).sum() / MAX_DIST
        obs[13] = self.t / HORIZON
        obs[14] = 1.0
        return obs

    def step(self, actions):
        a = [int(x) for x in actions]
        if len(a) != 2 or not all(0 <= x < N_ACTIONS for x in a):
            raise ValueError(f"invalid joint action {actions!r}")
        self.pos = np.clip(self.pos + MOVES[a], 0, SIZE - 1)
        for i in range(2):
            r, c = self.pos[i]
            found = self.board[r, c]
            if found != EMPTY and found != self.inv[i]:
                self.board[r, c] = self.inv[i]
                self.inv[i] = found
        rewards = np.zeros(2)
        self._outcome = None
        close = np.abs(self.pos[0] - self.pos[1]).sum() <= 1
        if close and self.inv.all() and INTERACT in a:
            rewards[:] = PAYOFF[(int(self.inv[0]), int(self.inv[1]))]
            self._outcome = _label(self.inv)
            self.pos = np.array(SPAWNS, dtype=int)[self.rng.permutation(2)]
            self.inv[:] = EMPTY
            self.board = _LAYOUT.copy()
        self.t += 1
        return rewards, self.observe(), self.t >= self.spec.horizon

    def outcome(self):
        return self._outcome

    def default_deviation(self) -> int:
        return NORTH

    # -- features --------------------------------------------------------------

    def joint_features(self, obs, h):
        obs = np.asarray(obs, float).reshape(-1, OBS_DIM)
        return grid_features(obs)

    def feature_parts(self, obs, h):
        obs = np.asarray(obs, float).reshape(-1, OBS_DIM)
        return grid_feature_parts(obs)

    def render(self) -> str:
        glyph = {EMPTY: ".", STAG: "S", HARE: "h"}
        rows = [[glyph[int(v)] for v in row] for row in self.board]
        for i in range(2):
            r, c = self.pos[i]
            mark = str(i) if self.inv[i] == EMPTY else "ABCD"[2 * i + self.inv[i] - 1]
            rows[r][c] = "*" if rows[r][c] in "01ABCD" else mark
        head = f"t={self.t:2d} inv={['-', 'stag', 'hare'][self.inv[0]]}/{['-', 'stag', 'hare'][self.inv[1]]}"
        return "\n".join([head] + ["".join(r) for r in rows])


def _label(inv) -> str:
    if inv[0] == inv[1]:
        return "stag-stag" if inv[0] == STAG else "hare-hare"
    return "mixed"


_PAIR = np.zeros((N_ACTIONS, N_ACTIONS, 17))
for _a in range(4):
    for _b in range(4):
        _PAIR[_a, _b, 4 * _a + _b] = 1.0
_PAIR[INTERACT, INTERACT, 16] = 1.0
_EYE = np.eye(N_ACTIONS)


def grid_features(obs: np.ndarray) -> np.ndarray:
    """Feature tensor ``(B, 6, 6, 200)`` for a batch of observations ``(B, 15)``."""
    batch = obs.shape[0]
    out = np.zeros((batch, N_ACTIONS, N_ACTIONS, FEATURE_DIM))
    out[..., 0:15] = obs[:, None, None, :]
    out[..., 15:21] = _EYE[None, :, None, :]
    out[..., 21:27] = _EYE[None, None, :, :]
    state = obs[:, :N_STATE]
    cross = _EYE[None, :, :, None] * state[:, None, None, :]  # (B, a, slot, 13): block ``a`` holds the state
    cross = cross.reshape(batch, N_ACTIONS, N_STATE * N_ACTIONS)
    out[..., 27:105] = cross[:, :, None, :]
    out[..., 105:183] = cross[:, None, :, :]
    out[..., 183:200] = _PAIR[None]
    out /= FEATURE_SCALE
    return out


_PAIR_PART = np.zeros((1, N_ACTIONS, N_ACTIONS, FEATURE_DIM))
_PAIR_PART[..., 183:200] = _PAIR / FEATURE_SCALE


def grid_feature_parts(obs: np.ndarray) -> list[np.ndarray]:
    """``grid_features`` split into state, per-player action and action-pair parts.

    Shapes (B, 1, 1, 200), (B, 6, 1, 200), (B, 1, 6, 200) and (1, 6, 6, 200);
    their broadcast sum is the full tensor.
    """
    batch = obs.shape[0]
    state = np.zeros((batch, 1, 1, FEATURE_DIM))
    state[:, 0, 0, :15] = obs
    cross = (_EYE[None, :, :, None] * obs[:, None, None, :N_STATE]).reshape(batch, N_ACTIONS, -1)
    own = []
    for onehot, block in ((15, 27), (21, 105)):
        part = np.zeros((batch, N_ACTIONS, FEATURE_DIM))
        part[:, :, onehot : onehot + N_ACTIONS] = _EYE
        part[:, :, block : block + N_STATE * N_ACTIONS] = cross
        own.append(part / FEATURE_SCALE)
    return [state / FEATURE_SCALE, own[0][:, :, None, :], own[1][:, None, :, :], _PAIR_PART]


def dynamic_stag_hunt(seed: int = 0, horizon: int = HORIZON) -> GridStagHunt:
    return GridStagHunt(seed=seed, horizon=horizon)
