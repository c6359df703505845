import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import GRID, grid_best_response, grid_fixed_point, own_values, player_views

from rqre.stage_solver import (
    Method,
    NonConvergence,
    SolverConfig,
    StagePayoff,
    exploitability,
    policy_risk_value,
    rqre_solve,
    smoothed_best_response,
    solve_batch,
)

STAG_HUNT = StagePayoff.symmetric([[4.0, 0.0], [2.0, 2.0]])


def l1(p, q):
    return sum(float(np.abs(np.asarray(a) - np.asarray(b)).sum()) for a, b in zip(p, q))


def test_zero_game_value_is_entropy():
    zero = StagePayoff(np.zeros((2, 2, 2)))
    v = policy_risk_value(zero, [[0.5, 0.5], [0.5, 0.5]], 0, SolverConfig(epsilon=1, tau=1))
    assert v == pytest.approx(math.log(2), abs=1e-15)


def test_entropy_term_vanishes_near_vertices():
    zero = StagePayoff(np.zeros((2, 2, 2)))
    cfg = SolverConfig(epsilon=1, tau=1)
    values = [policy_risk_value(zero, [[1 - s, s], [0.5, 0.5]], 0, cfg) for s in (1e-2, 1e-4, 1e-8)]
    assert all(v > 0 for v in values)
    assert values[0] > values[1] > values[2]
    assert values[-1] < 1e-6


def test_tau_zero_is_expected_utility_plus_entropy():
    rng = np.random.default_rng(0)
    game = StagePayoff(rng.normal(size=(2, 3, 2)))
    p, q = np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.4])
    expected = p @ game.tensors[0] @ q - (p * np.log(p)).sum() / 2.0
    assert policy_risk_value(game, [p, q], 0, SolverConfig(epsilon=2.0)) == pytest.approx(expected, abs=1e-14)


def test_stag_hunt_value_against_monte_carlo():
    cfg = SolverConfig(epsilon=1, tau=1)
    v = policy_risk_value(STAG_HUNT, [[0.5, 0.5], [0.5, 0.5]], 0, cfg)
    u_pi = np.array([0.5 * 4 + 0.5 * 2, 0.5 * 0 + 0.5 * 2])
    closed = -math.log(0.5 * math.exp(-u_pi[0]) + 0.5 * math.exp(-u_pi[1])) + math.log(2)
    assert v == pytest.approx(closed, abs=1e-14)
    rng = np.random.default_rng(11)
    draws = rng.integers(0, 2, 1_000_000)
    mc = -math.log(np.exp(-u_pi[draws]).mean()) + math.log(2)
    assert v == pytest.approx(mc, abs=5e-3)


def test_closed_form_value_agrees_with_oracle_evaluator():
    rng = np.random.default_rng(5)
    for _ in range(20):
        t = rng.uniform(-2, 2, (2, 2, 2))
        x, y, tau = rng.uniform(0.05, 0.95, 3)
        game = StagePayoff(t)
        cfg = SolverConfig(epsilon=1.7, tau=tau)
        u0, u1 = player_views(t)
        prof = [[x, 1 - x], [y, 1 - y]]
        assert policy_risk_value(game, prof, 0, cfg) == pytest.approx(float(own_values(u0, x, y, 1.7, tau)), abs=1e-12)
        assert policy_risk_value(game, prof, 1, cfg) == pytest.approx(float(own_values(u1, y, x, 1.7, tau)), abs=1e-12)


def test_best_response_zero_game_uniform():
    zero = StagePayoff(np.zeros((2, 3, 2)))
    for eps in (0.1, 1.0, 30.0):
        br = smoothed_best_response(zero, [None, [0.3, 0.7]], 0, SolverConfig(epsilon=eps))
        np.testing.assert_allclose(br, np.full(3, 1 / 3), atol=1e-15)


def test_best_response_logit_formula():
    game = StagePayoff(np.array([[[1.0], [0.0]], [[0.0], [0.0]]]))
    br = smoothed_best_response(game, [None, [1.0]], 0, SolverConfig(epsilon=1))
    np.testing.assert_allclose(br, [0.73106, 0.26894], atol=1e-5)
    np.testing.assert_allclose(br, [math.e / (1 + math.e), 1 / (1 + math.e)], atol=1e-15)


def test_best_response_stag_hunt_grid_oracle():
    cfg = SolverConfig(epsilon=1, tau=2, tol=1e-12, max_iters=500)
    br = smoothed_best_response(STAG_HUNT, [None, [0.5, 0.5]], 0, cfg)
    u0, _ = player_views(STAG_HUNT.tensors)
    x = grid_best_response(u0, 0.5, 1.0, 2.0)[0]
    assert l1(br, [x, 1 - x]) <= 1e-3


def test_best_response_non_convergence_carries_residual():
    with pytest.raises(NonConvergence) as info:
        smoothed_best_response(STAG_HUNT, [None, [0.5, 0.5]], 0, SolverConfig(epsilon=5, tau=3, max_iters=1, tol=1e-14))
    assert info.value.residual > 1e-14


def test_zero_game_solved_immediately():
    prof, diag = rqre_solve(StagePayoff(np.zeros((2, 2, 3))), SolverConfig())
    np.testing.assert_allclose(prof[0], [0.5, 0.5])
    np.testing.assert_allclose(prof[1], [1 / 3] * 3)
    assert diag.iterations == 1
    assert diag.max_exploitability == 0.0
    assert diag.certified


def test_coordination_symmetric_point():
    prof, diag = rqre_solve(StagePayoff.symmetric(np.eye(2)), SolverConfig(epsilon=1))
    np.testing.assert_allclose(prof[0], [0.5, 0.5], atol=1e-12)
    assert diag.max_exploitability <= 1e-8


@pytest.mark.parametrize("tau", [0.0, 1.0, 2.0])
@pytest.mark.parametrize("method", [Method.FIXED_POINT, Method.MIRROR_ASCENT])
def test_stag_hunt_matches_fixed_point_oracle(tau, method):
    x, y = grid_fixed_point(STAG_HUNT.tensors, 1.0, tau)
    prof, diag = rqre_solve(STAG_HUNT, SolverConfig(epsilon=1, tau=tau, method=method, max_iters=2000, tol=1e-10))
    assert l1(prof, [[x, 1 - x], [y, 1 - y]]) <= 1e-3


@pytest.mark.parametrize("tau", [0.0, 1.0])
def test_hedge_average_approaches_oracle(tau):
    x, y = grid_fixed_point(STAG_HUNT.tensors, 1.0, tau)
    prof, _ = rqre_solve(STAG_HUNT, SolverConfig(epsilon=1, tau=tau, method=Method.HEDGE_LIFTED, max_iters=20000))
    assert l1(prof, [[x, 1 - x], [y, 1 - y]]) <= 2e-2


def test_stag_hunt_tau_effect_is_monotone():
    taus = np.logspace(-3, 1, 13)
    stag = [rqre_solve(STAG_HUNT, SolverConfig(epsilon=1, tau=t, tol=1e-11))[0][0][0] for t in taus]
    assert np.all(np.diff(stag) < 0)


def test_exploitability_zero_game_qre():
    zero = StagePayoff(np.zeros((3, 2, 2, 2)))
    gaps, worst = exploitability(zero, [[0.5, 0.5]] * 3, SolverConfig(epsilon=3, tau=0.7))
    assert worst <= 1e-12


def test_exploitability_single_player_closed_form():
    game = StagePayoff(np.array([[[1.0], [0.0]], [[0.0], [0.0]]]))
    gaps, worst = exploitability(game, [[0.5, 0.5], [1.0]], SolverConfig(epsilon=1))
    assert worst == pytest.approx(math.log(1 + math.e) - 0.5 - math.log(2), abs=1e-14)
    assert gaps[1] == 0.0


def test_one_action_player_is_point_mass():
    game = StagePayoff(np.random.default_rng(1).normal(size=(2, 3, 1)))
    prof, diag = rqre_solve(game, SolverConfig(epsilon=2, tau=0.5, tol=1e-10))
    np.testing.assert_array_equal(prof[1], [1.0])
    assert diag.certified


def _random_games(rng, count, shape):
    return rng.uniform(0, 1, (count, len(shape), *shape))


@pytest.mark.parametrize("shape", [(2, 2), (3, 3)])
@pytest.mark.parametrize("tau", [0.0, 0.5])
def test_multistart_uniqueness(shape, tau):
    rng = np.random.default_rng(17)
    games = _random_games(rng, 100, shape)
    cfg = SolverConfig(epsilon=2.0, tau=tau, tol=1e-11, max_iters=3000)
    ref, res, _, _ = solve_batch(games, cfg)
    assert res.max() <= 1e-10
    for _ in range(10):
        init = [rng.dirichlet(np.ones(k), size=100) for k in shape]
        prof, res, _, _ = solve_batch(games, cfg, init=init)
        dist = sum(np.abs(a - b).sum(axis=1) for a, b in zip(prof, ref))
        assert dist.max() <= 1e-6


def test_fixed_point_residual_bound():
    rng = np.random.default_rng(2)
    cfg = SolverConfig(epsilon=1.5, tol=1e-9)
    for _ in range(20):
        game = StagePayoff(rng.normal(size=(2, 3, 4)))
        prof, diag = rqre_solve(game, cfg)
        for i, other in ((0, 1), (1, 0)):
            g = game.tensors[i] @ prof[1] if i == 0 else prof[0] @ game.tensors[1]
            target = np.exp(1.5 * (g - g.max()))
            assert np.abs(prof[i] - target / target.sum()).sum() <= 10 * cfg.tol


@pytest.mark.parametrize("tau", [0.0, 0.8])
def test_payoff_shift_invariance(tau):
    rng = np.random.default_rng(4)
    cfg = SolverConfig(epsilon=1.5, tau=tau, tol=1e-12, max_iters=3000)
    for _ in range(10):
        game = StagePayoff(rng.uniform(0, 1, (2, 2, 3)))
        base, _ = rqre_solve(game, cfg)
        moved, _ = rqre_solve(game.shifted(0, 3.7).shifted(1, -2.1), cfg)
        assert l1(base, moved) <= 1e-8


def test_limit_recovery():
    dominant = StagePayoff.bimatrix([[1.0, 1.0], [0.0, 0.0]], [[0.3, 0.1], [0.2, 0.9]])
    prof, _ = rqre_solve(dominant, SolverConfig(epsilon=1e3, tol=1e-9))
    assert prof[0][0] >= 1 - 1e-3
    rng = np.random.default_rng(8)
    game = StagePayoff(rng.normal(size=(2, 3, 3)))
    prof, _ = rqre_solve(game, SolverConfig(epsilon=1e-3, tau=0.5))
    assert l1(prof, [np.full(3, 1 / 3)] * 2) <= 1e-3


def test_methods_agree_on_random_games():
    rng = np.random.default_rng(6)
    for _ in range(5):
        game = StagePayoff(rng.uniform(0, 1, (2, 3, 2)))
        fp, _ = rqre_solve(game, SolverConfig(epsilon=2, tau=0.7, tol=1e-10))
        mp, d = rqre_solve(game, SolverConfig(epsilon=2, tau=0.7, tol=1e-10, method=Method.MIRROR_ASCENT, max_iters=2000))
        assert d.certified
        assert l1(fp, mp) <= 1e-6
        hd, _ = rqre_solve(game, SolverConfig(epsilon=2, tau=0.7, method=Method.HEDGE_LIFTED, max_iters=5000))
        assert l1(fp, hd) <= 3e-2


def test_uncertified_solve_returns_best_iterate():
    rng = np.random.default_rng(9)
    game = StagePayoff(rng.normal(size=(2, 3, 3)) * 5)
    prof, diag = rqre_solve(game, SolverConfig(epsilon=20, tau=1.0, max_iters=2, tol=1e-14))
    assert not diag.certified
    assert all(abs(p.sum() - 1) < 1e-10 and np.all(p > 0) for p in prof)
    assert diag.max_exploitability > 0


game_tensors = arrays(np.float64, (2, 2, 3), elements=st.floats(-3, 3, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(game_tensors, st.floats(0.1, 5), st.floats(0, 3))
def test_solutions_have_full_support(t, eps, tau):
    prof, diag = rqre_solve(StagePayoff(t), SolverConfig(epsilon=eps, tau=tau, tol=1e-9, max_iters=200))
    for p in prof:
        assert np.all(p > 0)
        assert abs(p.sum() - 1) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(
    game_tensors,
    st.floats(0.1, 5),
    st.floats(0, 3),
    arrays(np.float64, 2, elements=st.floats(0.01, 1)),
    arrays(np.float64, 3, elements=st.floats(0.01, 1)),
)
def test_exploitability_nonnegative(t, eps, tau, p, q):
    gaps, _ = exploitability(StagePayoff(t), [p / p.sum(), q / q.sum()], SolverConfig(epsilon=eps, tau=tau))
    assert np.all(gaps >= -1e-9)


def test_grid_oracle_resolution():
    assert GRID.size == 10001
