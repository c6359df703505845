import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rqre.linear_fa import (
    FeatureMap,
    OviHyper,
    RidgeDesign,
    elliptical_potential_audit,
    q_estimate,
    read_designs,
    value_cap,
    write_designs,
)

E1 = np.array([1.0, 0.0])


def unit_rows(rng, k, d):
    x = rng.normal(size=(k, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True) * rng.uniform(0, 1, (k, 1))


def test_single_update_arithmetic():
    design = RidgeDesign(2, 1, lam=1.0).update(E1, [1.0])
    np.testing.assert_array_equal(design.gram, np.diag([2.0, 1.0]))
    np.testing.assert_array_equal(design.target_sums, [[1.0, 0.0]])
    np.testing.assert_allclose(design.weights(0), [0.5, 0.0], atol=1e-15)


def test_zero_feature_only_counts():
    design = RidgeDesign(3, 2).update(np.zeros(3), [5.0, -1.0])
    np.testing.assert_array_equal(design.gram, np.eye(3))
    np.testing.assert_array_equal(design.target_sums, 0.0)
    assert design.count == 1


def test_update_validation():
    design = RidgeDesign(2, 1)
    with pytest.raises(ValueError):
        design.update(np.ones(3), [1.0])
    with pytest.raises(ValueError):
        design.update(E1, [1.0, 2.0])
    with pytest.raises(ValueError):
        design.update(np.array([1.0, 1.0]), [0.0])


def test_incremental_matches_batch():
    rng = np.random.default_rng(0)
    phis = unit_rows(rng, 1000, 6)
    ys = rng.normal(size=(1000, 2))
    inc = RidgeDesign(6, 2, lam=0.5)
    for phi, y in zip(phis, ys):
        inc.update(phi, y)
    scratch = 0.5 * np.eye(6) + phis.T @ phis
    assert np.linalg.norm(inc.gram - scratch) <= 1e-10
    batch = RidgeDesign.from_data(phis, ys, 0.5)
    assert np.linalg.norm(inc.gram - batch.gram) <= 1e-10
    assert inc.check() == []


def test_weights_residual_and_zero_targets():
    rng = np.random.default_rng(1)
    phis = unit_rows(rng, 50, 4)
    design = RidgeDesign.from_data(phis, rng.normal(size=(50, 3)), 1.0)
    w = design.weights()
    resid = np.linalg.norm(design.gram @ w.T - design.target_sums.T) / np.linalg.norm(design.target_sums)
    assert resid <= 1e-10
    zero = RidgeDesign.from_data(phis, np.zeros((50, 1)), 1.0)
    np.testing.assert_array_equal(zero.weights(0), 0.0)


def test_exact_recovery_of_linear_targets():
    rng = np.random.default_rng(2)
    d = 5
    w_star = rng.normal(size=d)
    w_star /= np.linalg.norm(w_star)
    phis = unit_rows(rng, d, d)
    design = RidgeDesign.from_data(phis, (phis @ w_star)[:, None], 1e-8)
    np.testing.assert_allclose(design.weights(0), w_star, atol=1e-4)


def test_bonus_examples():
    design = RidgeDesign(2, 1, lam=1.0)
    assert design.bonus(E1, 0.1) == pytest.approx(0.1, abs=1e-15)
    design.update(E1, [0.0])
    assert design.bonus(E1, 0.1) == pytest.approx(0.1 * math.sqrt(0.5), abs=1e-15)
    assert design.bonus(E1, 0.1) == pytest.approx(0.07071, abs=1e-5)


@pytest.mark.parametrize("k", [1, 10, 100])
def test_bonus_rank_one_closed_form(k):
    design = RidgeDesign.from_data(np.tile(E1, (k, 1)), np.zeros((k, 1)), 1.0)
    assert design.bonus(E1, 0.1) == pytest.approx(0.1 / math.sqrt(1 + k), rel=1e-12)


def test_bonus_monotone_under_more_data():
    rng = np.random.default_rng(3)
    phis = unit_rows(rng, 40, 5)
    probes = unit_rows(rng, 200, 5)
    design = RidgeDesign(5, 1)
    before = design.bonus(probes, 1.0)
    for phi in phis:
        design.update(phi, [0.0])
        after = design.bonus(probes, 1.0)
        assert np.all(after <= before + 1e-12)
        before = after


def test_q_estimate_clipping_and_cap():
    hyper = OviHyper(beta=0.0, B_clip=value_cap(2, [2, 2], 1.0))
    assert hyper.B_clip == pytest.approx(2 * (1 + math.log(2)))
    assert hyper.B_clip == pytest.approx(3.38629, abs=1e-5)
    fresh = RidgeDesign(2, 1)
    assert q_estimate(fresh, 0, E1, hyper) == 0.0
    big = RidgeDesign.from_data(np.tile(E1, (100, 1)), np.full((100, 1), 50.0), 1.0)
    assert q_estimate(big, 0, E1, hyper) == hyper.B_clip
    neg = RidgeDesign.from_data(np.tile(E1, (100, 1)), np.full((100, 1), -3.0), 1.0)
    assert q_estimate(neg, 0, E1, OviHyper(beta=0.1, B_clip=5.0)) == 0.0


def test_value_cap_uses_worst_player():
    assert value_cap(3, [2, 6], [1.0, 0.5]) == pytest.approx(3 * (1 + math.log(6) / 0.5))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 30), st.floats(0, 2), st.floats(0.1, 10), st.integers(0, 10_000))
def test_q_estimate_always_in_range(m, beta, cap, seed):
    rng = np.random.default_rng(seed)
    phis = unit_rows(rng, m, 3)
    design = RidgeDesign.from_data(phis, rng.normal(scale=10, size=(m, 2)), 1.0)
    q = design.q_estimate(unit_rows(rng, 20, 3), OviHyper(beta=beta, B_clip=cap))
    assert np.all(q >= 0) and np.all(q <= cap)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.floats(0.01, 10), st.integers(0, 10_000))
def test_design_stays_positive_definite(m, lam, seed):
    rng = np.random.default_rng(seed)
    design = RidgeDesign(4, 1, lam=lam)
    for phi in unit_rows(rng, m, 4):
        design.update(phi, [1.0])
    assert design.check() == []


def test_harmonic_potential_closed_form():
    K = 1000
    audit = elliptical_potential_audit(np.ones((K, 1)), 1.0)
    harmonic = sum(1.0 / (1 + k) for k in range(K))
    assert abs(audit.cumulative - harmonic) <= 1e-8
    assert audit.bound == pytest.approx(2 * math.log(1 + K))
    assert audit.passed


def test_empty_trace_passes():
    audit = elliptical_potential_audit(np.zeros((0, 3)), 1.0)
    assert audit.cumulative == 0.0 and audit.passed


def test_random_potential_within_bound():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(10_000, 5))
    audit = elliptical_potential_audit(x / np.linalg.norm(x, axis=1, keepdims=True), 1.0)
    assert audit.bound == pytest.approx(2 * 5 * math.log(1 + 1e4))
    assert audit.bound == pytest.approx(92.1, abs=0.05)
    assert audit.passed


def test_feature_map_normalisation():
    fmap = FeatureMap.normalized(2, lambda s, a, h: np.array([s, a]), [(3.0, 4.0, 0), (1.0, 1.0, 0)])
    np.testing.assert_allclose(fmap.evaluate(3.0, 4.0, 0), [0.6, 0.8])
    assert np.linalg.norm(fmap.evaluate(30.0, 40.0, 0)) <= 1 + 1e-12


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    designs = [RidgeDesign.from_data(unit_rows(rng, 20, 3), rng.normal(size=(20, 2)), 1.0) for _ in range(4)]
    path = tmp_path / "ck.bin"
    write_designs(path, designs, episode=17)
    loaded, weights, episode = read_designs(path)
    assert episode == 17
    for a, b, w in zip(designs, loaded, weights):
        np.testing.assert_array_equal(a.gram, b.gram)
        np.testing.assert_array_equal(a.target_sums, b.target_sums)
        np.testing.assert_array_equal(a.weights(), w)
        assert a.count == b.count
    raw = path.read_bytes()
    assert raw[:8] == b"RQRECKPT"
    (tmp_path / "bad.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_designs(tmp_path / "bad.bin")


def test_tampered_design_detected():
    design = RidgeDesign(3, 1)
    design.gram[0, 0] = -1.0
    assert design.check()
