import pickle

import numpy as np
import pytest

from rqre.envs import dynamic_stag_hunt, linear_bandit, stag_hunt, synthetic_linear_mg
from rqre.linear_fa import OviHyper, value_cap
from rqre.ovi import TrainConfig, Trainer, TrainHooks, compute_targets, optimism_audit, train
from rqre.risk import RiskSpec
from rqre.stage_solver import SolverConfig

SOLVER = SolverConfig(epsilon=1.0, tau=0.0, tol=1e-8, max_iters=500)


def _matrix_cfg(**kw):
    base = dict(
        episodes=30,
        horizon=1,
        solver=SOLVER,
        hyper=OviHyper(beta=0.1, B_clip=value_cap(1, (2, 2), 1.0), lam=1.0),
        update_frequency=1,
        reward_scale=4.0,
    )
    base.update(kw)
    return TrainConfig(**base)


def _synthetic(seed=0, **kw):
    return synthetic_linear_mg(d=4, n=2, horizon=2, action_counts=(2, 2), seed=seed, n_states=5, **kw)


def _synthetic_cfg(**kw):
    base = dict(
        episodes=40,
        horizon=2,
        solver=SolverConfig(epsilon=2.0, tau=0.5, tol=1e-8, max_iters=300),
        hyper=OviHyper(beta=0.1, B_clip=value_cap(2, (2, 2), 2.0), lam=1.0),
        update_frequency=5,
        seed=7,
        risk_samples=4,
        env_risk=RiskSpec.entropic(0.5),
    )
    base.update(kw)
    return TrainConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(episodes=0, horizon=1)
    with pytest.raises(ValueError):
        TrainConfig(episodes=1, horizon=1, reward_scale=0.0)
    with pytest.raises(ValueError):
        Trainer(stag_hunt(), TrainConfig(episodes=1, horizon=2))
    with pytest.raises(ValueError):
        Trainer(dynamic_stag_hunt(0), TrainConfig(episodes=1, horizon=75, risk_samples=4))


def test_first_episode_plays_uniform_and_weights_stay_zero():
    agents, log = train(stag_hunt(), _matrix_cfg(episodes=1))
    profile = agents.policies(np.ones((1, 1)), 0, bonus=True)[0]
    assert all(np.allclose(p, 0.5, atol=1e-12) for p in profile)
    assert not agents.fitted(0)
    assert np.all(agents.weights[0] == 0)
    assert len(log.rows) == 1


def test_bandit_recovers_theta():
    theta = np.array([0.3, 0.8])
    env = linear_bandit(theta, [[1.0, 0.0], [0.2, 0.8]])
    cfg = TrainConfig(
        episodes=500,
        horizon=1,
        solver=SolverConfig(epsilon=1.0, tol=1e-10),
        hyper=OviHyper(beta=0.1, B_clip=value_cap(1, (2,), 1.0)),
        update_frequency=1,
    )
    agents, _ = train(env, cfg)
    assert np.linalg.norm(agents.weights[0][0] - theta) <= 0.05


def test_targets_examples():
    cfg = TrainConfig(episodes=1, horizon=1, reward_scale=4.0)
    assert compute_targets([[4.0]], [[0.0]], cfg)[0, 0] == 1.0
    neutral = TrainConfig(episodes=1, horizon=1)
    assert compute_targets([[1.0]], [[2.0]], neutral)[0, 0] == 3.0
    ent = TrainConfig(episodes=1, horizon=1, env_risk=RiskSpec.entropic(2.0))
    assert compute_targets([[1.0]], [[[0.7]]], ent)[0, 0] == pytest.approx(1.7, abs=1e-14)
    assert compute_targets([[0.5]], [[0.7]], ent)[0, 0] == 1.2


def test_sampled_targets_use_value_side_risk():
    ent = TrainConfig(episodes=1, horizon=1, env_risk=RiskSpec.entropic(1.0))
    y = compute_targets([[0.0]], [[[0.0], [1.0]]], ent)[0, 0]
    assert y == pytest.approx(-np.log((1 + np.exp(-1)) / 2), abs=1e-14)
    assert y < 0.5


def test_targets_reject_missing_values():
    with pytest.raises(ValueError):
        compute_targets([[1.0]], [[np.nan]], TrainConfig(episodes=1, horizon=1))
    with pytest.raises(ValueError):
        compute_targets([[1.0, 1.0]], [[1.0]], TrainConfig(episodes=1, horizon=1))


def test_buffer_keeps_most_recent():
    trainer = Trainer(stag_hunt(), _matrix_cfg(episodes=12, buffer_capacity=5))
    trainer.run()
    eps = [t.episode for _, t in trainer.buffers[0]]
    assert eps == list(range(7, 12))


def test_training_is_deterministic():
    a = train(_synthetic(), _synthetic_cfg())[1].csv_lines()
    b = train(_synthetic(), _synthetic_cfg())[1].csv_lines()
    assert a == b
    c = train(_synthetic(), _synthetic_cfg(seed=8))[1].csv_lines()
    assert a != c


def test_resume_from_pickle_matches_uninterrupted():
    full = train(_synthetic(), _synthetic_cfg())[1].csv_lines()
    saved = {}

    def grab(trainer, episode):
        if episode == 20:
            saved["blob"] = pickle.dumps(trainer)

    Trainer(_synthetic(), _synthetic_cfg(checkpoint_every=10), TrainHooks(on_checkpoint=grab)).run()
    resumed = pickle.loads(saved["blob"])
    resumed.hooks = TrainHooks()
    assert resumed.episode == 20
    assert resumed.run()[1].csv_lines() == full


def test_targets_bounded_and_potential_audit_holds():
    cfg = _synthetic_cfg()
    trainer = Trainer(_synthetic(), cfg)
    agents, log = trainer.run()
    assert all(a.passed for a in log.potential)
    assert [a.steps for a in log.potential] == [40, 40]
    for y in trainer.last_targets:
        assert y.min() >= 0 and y.max() <= 1 + cfg.hyper.B_clip
    for h in range(2):
        assert agents.q_tensors(np.eye(5), h).max() <= cfg.hyper.B_clip + 1e-12


def test_policies_have_full_support():
    agents, _ = train(_synthetic(), _synthetic_cfg())
    for h in range(2):
        profile = agents.policies(np.eye(5), h, bonus=True)[0]
        assert min(p.min() for p in profile) > 0


def test_entropy_nonincreasing_in_precision():
    agents, _ = train(_synthetic(), _synthetic_cfg(solver=SolverConfig(epsilon=2.0, tau=0.0, tol=1e-10)))
    Q = agents.q_tensors(np.eye(5), 0, bonus=False)
    from rqre.stage_solver import solve_batch

    entropies = []
    for eps in (0.5, 1.0, 2.0, 4.0, 8.0):
        profile = solve_batch(Q, SolverConfig(epsilon=eps, tol=1e-10, max_iters=2000))[0]
        entropies.append(-sum((p * np.log(p)).sum(axis=-1) for p in profile))
    E = np.array(entropies)
    assert np.all(np.diff(E, axis=0) <= 1e-9)


def test_untrained_agents_are_optimistic():
    env = _synthetic()
    trainer = Trainer(env, _synthetic_cfg(episodes=1))
    assert optimism_audit(trainer.agents, env, probes=200) == 1.0


def test_optimism_audit_rejects_grid():
    agents, _ = train(stag_hunt(), _matrix_cfg(episodes=2))
    with pytest.raises(ValueError):
        optimism_audit(agents, dynamic_stag_hunt(0))


def test_matrix_training_logs_exploitability():
    agents, log = train(stag_hunt(), _matrix_cfg(episodes=40))
    ex = log.column("exploitability")
    assert np.all(np.isfinite(ex)) and np.all(ex >= 0)
    assert log.column("team_return").max() <= 8
