import numpy as np
import pytest

from rqre.stability import (
    alpha_sweep_ratio,
    coordination_game,
    format_table,
    lipschitz_probe,
    nash_instability_demo,
    nash_selection,
    profile_distance,
)
from rqre.stage_solver import SolverConfig, StagePayoff

CFG = SolverConfig(epsilon=1.0, tau=0.0, tol=1e-12, max_iters=5000)


def test_coordination_family_entries():
    t = coordination_game(1.0).tensors
    assert t[0, 0, 0] == 1 and t[1, 0, 0] == 1
    assert t[0, 1, 1] == 1 and t[0, 0, 1] == 0


def test_nash_selection_jumps_across_one():
    assert profile_distance(nash_selection(0.99), nash_selection(1.01)) == 2.0


@pytest.mark.parametrize("e, bound", [(0.1, 10), (0.01, 100), (0.001, 1000)])
def test_nash_implied_lipschitz_diverges(e, bound):
    (row,) = nash_instability_demo([e], CFG)
    assert row.nash_jump == 2.0
    assert row.alpha_gap == pytest.approx(2 * e)
    assert row.nash_lipschitz >= bound * (1 - 1e-9)


def test_rqre_change_is_linear_in_gap():
    coarse, fine = nash_instability_demo([0.1, 0.01], CFG)
    c_over_mu = coarse.rqre_change / coarse.alpha_gap
    assert fine.rqre_change <= c_over_mu * fine.alpha_gap * (1 + 1e-6)
    assert fine.rqre_ratio == pytest.approx(coarse.rqre_ratio, rel=1e-2)


def test_alpha_sweep_bounded():
    assert alpha_sweep_ratio(CFG, np.linspace(0.9, 1.1, 201)) <= 10


def test_zero_game_probe_within_softmax_jacobian_bound():
    zero = StagePayoff(np.zeros((2, 2, 2)))
    for mag in (0.1, 0.01):
        assert lipschitz_probe(zero, CFG, 50, mag, seed=1) <= 1.0


def test_probe_grows_with_precision():
    rng = np.random.default_rng(12)
    means = []
    for eps in (1.0, 3.0, 10.0):
        cfg = SolverConfig(epsilon=eps, tol=1e-12, max_iters=5000)
        vals = []
        for s in range(20):
            game = StagePayoff(np.random.default_rng(100 + s).uniform(0, 1, (2, 2, 2)))
            vals.append(lipschitz_probe(game, cfg, 10, 1e-3, seed=s))
        means.append(np.mean(vals))
    assert means[0] <= means[1] <= means[2]


def test_risk_aversion_does_not_destabilise_zero_game():
    zero = StagePayoff(np.zeros((2, 2, 2)))
    cfg = SolverConfig(epsilon=1.0, tau=1.0, tol=1e-12, max_iters=5000)
    assert lipschitz_probe(zero, cfg, 20, 0.05) <= 1.0


def test_invalid_inputs():
    with pytest.raises(ValueError):
        lipschitz_probe(coordination_game(1.0), CFG, 1, 0.0)
    with pytest.raises(ValueError):
        nash_instability_demo([0.0])


def test_table_has_one_row_per_value():
    text = format_table(nash_instability_demo([0.1, 0.01], CFG))
    assert len(text.splitlines()) == 3
