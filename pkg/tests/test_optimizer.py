"""MALA oracles on analytic targets, plus batch-chain contracts on real grasps."""

import csv

import numpy as np
import pytest

from dualgrasp import geometry
from dualgrasp.energy import EnergyModel
from dualgrasp.initializer import initialize_batch
from dualgrasp.optimizer import (OptimizerConfig, joint_step_scales,
                                 mala_log_acceptance, mala_step, optimize,
                                 optimize_batch)


@pytest.fixture(scope="module")
def small_obj():
    return geometry.ObjectModel("ball", geometry.make_icosphere(0.12, 1),
                                density=2500.0)


@pytest.fixture(scope="module")
def small_model(small_obj, hand22):
    return EnergyModel(small_obj, hand22)


@pytest.fixture(scope="module")
def two_grasps(small_obj, hand22):
    return initialize_batch(small_obj, hand22, 2, seed=5)


# -- Euclidean MALA against analytic targets ---------------------------------------


def quad(x):
    return 0.5 * float(np.dot(x, x))


def quad_grad(x):
    return np.asarray(x, dtype=float)


def test_zero_temperature_step_is_exact_gradient_descent():
    cfg = OptimizerConfig(steps=1, temperature=0.0)
    rng = np.random.default_rng(0)
    x = np.array([1.0, -2.0, 0.5])
    eta = 0.3
    y, accepted = mala_step(x, quad, quad_grad, cfg, rng, eta=eta)
    assert accepted
    assert np.abs(y - (x - eta * x)).max() < 1e-15


def test_zero_temperature_rejects_increases():
    # eta > 2 overshoots the quadratic bowl, so the drift move raises energy
    cfg = OptimizerConfig(steps=1, temperature=0.0)
    rng = np.random.default_rng(0)
    x = np.array([1.0, -2.0, 0.5])
    y, accepted = mala_step(x, quad, quad_grad, cfg, rng, eta=2.5)
    assert not accepted
    assert np.array_equal(y, x)
    assert y is not x  # rejected step returns a copy, not the caller's array


def test_zero_temperature_descent_contracts_geometrically():
    cfg = OptimizerConfig(steps=1, temperature=0.0)
    rng = np.random.default_rng(0)
    x = np.array([4.0, -3.0])
    eta = 0.25
    for _ in range(20):
        x, accepted = mala_step(x, quad, quad_grad, cfg, rng, eta=eta)
        assert accepted
    assert np.abs(x - np.array([4.0, -3.0]) * (1 - eta) ** 20).max() < 1e-12


def test_log_acceptance_reduces_to_metropolis_without_gradients():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(6)
    y = rng.standard_normal(6)
    z = np.zeros(6)
    tau = 0.7
    log_a = mala_log_acceptance(x, y, 1.9, 2.4, z, z, 0.1, tau)
    assert abs(log_a - (1.9 - 2.4) / tau) < 1e-12


def test_log_acceptance_matches_independent_density_ratio():
    # independently assembled from per-coordinate Gaussian log-densities
    rng = np.random.default_rng(4)
    x = rng.standard_normal(5)
    y = rng.standard_normal(5)
    g_x = rng.standard_normal(5)
    g_y = rng.standard_normal(5)
    e_x, e_y = 1.3, 0.8
    eta = np.array([0.2, 0.1, 0.05, 0.3, 0.15])
    tau = 0.9

    def log_q(b, a, g_a):
        mean = a - eta * g_a
        var = 2.0 * eta * tau
        return float(np.sum(-0.5 * np.log(2 * np.pi * var)
                            - (b - mean) ** 2 / (2 * var)))

    manual = (e_x - e_y) / tau + log_q(x, y, g_y) - log_q(y, x, g_x)
    got = mala_log_acceptance(x, y, e_x, e_y, g_x, g_y, eta, tau)
    assert abs(got - manual) < 1e-10


def test_log_acceptance_zero_temperature_is_accept_iff_lower():
    x = np.zeros(3)
    y = np.ones(3)
    assert mala_log_acceptance(x, y, 2.0, 1.0, x, x, 0.1, 0.0) == np.inf
    assert mala_log_acceptance(x, y, 1.0, 2.0, x, x, 0.1, 0.0) == -np.inf


def test_mala_samples_the_gibbs_distribution():
    # stationary law of MALA on E = x^2/2 at temperature tau is N(0, tau);
    # a wrong acceptance ratio shifts the sampled variance
    cfg = OptimizerConfig(steps=1, temperature=0.8)
    rng = np.random.default_rng(11)
    x = np.array([0.0])
    xs = np.empty(30000)
    for k in range(xs.size):
        x, _ = mala_step(x, quad, quad_grad, cfg, rng, eta=0.3)
        xs[k] = x[0]
    tail = xs[5000:]
    assert abs(tail.mean()) < 0.05
    assert abs(tail.var() - 0.8) < 0.08


def test_rejects_non_finite_proposals():
    cfg = OptimizerConfig(steps=1, temperature=1.0)
    rng = np.random.default_rng(0)

    def energy(x):
        return np.inf if np.abs(x).max() > 1.0 else quad(x)

    x = np.array([0.999])
    rejected_any = False
    for _ in range(50):
        x_new, accepted = mala_step(x, energy, quad_grad, cfg, rng, eta=0.5)
        if not accepted and np.array_equal(x_new, x):
            rejected_any = True
        x = x_new
        assert np.isfinite(energy(x))
    assert rejected_any


# -- configuration ------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(steps=0)
    with pytest.raises(ValueError):
        OptimizerConfig(step_translation=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(step_joint=-1e-9)
    with pytest.raises(ValueError):
        OptimizerConfig(temperature=-0.1)
    with pytest.raises(ValueError):
        OptimizerConfig(anneal=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(anneal=1.5)


def test_eta56_uniform_blocks_without_hand():
    cfg = OptimizerConfig(step_translation=1e-9, step_rotation=2e-8,
                          step_joint=3e-7)
    eta = cfg.eta56()
    assert eta.shape == (56,)
    assert np.array_equal(eta[:28], eta[28:])
    assert (eta[0:3] == 1e-9).all()
    assert (eta[3:6] == 2e-8).all()
    assert (eta[6:28] == 3e-7).all()


def test_eta56_jacobi_scaled_joints(hand22):
    cfg = OptimizerConfig(step_joint=1e-5)
    eta = cfg.eta56(hand=hand22)
    scales = joint_step_scales(hand22)
    assert np.array_equal(eta[6:28], 1e-5 * scales)
    assert np.array_equal(eta[:28], eta[28:])
    assert eta[6:28].max() == pytest.approx(1e-5)


def test_joint_step_scales_properties(hand22):
    s = joint_step_scales(hand22)
    assert s.shape == (hand22.n_joints,)
    assert (s > 0.0).all() and (s <= 1.0).all()
    assert s.max() == 1.0
    # levers differ strongly across the kinematic tree
    assert s.min() < 0.5
    assert np.array_equal(s, joint_step_scales(hand22))


# -- batched chains on real grasp states --------------------------------------------


def test_optimize_batch_trace_contract(small_model, two_grasps):
    out = optimize_batch(small_model, two_grasps,
                         OptimizerConfig(steps=3, seed=2))
    assert len(out) == 2
    for g, tr in out:
        assert tr.energy.shape == (3,)
        assert tr.accepted.shape == (3,)
        assert tr.accepted.dtype == bool
        assert tr.accepted_count == int(tr.accepted.sum())
        assert np.isfinite(tr.best_energy)
        assert tr.breakdown.total == pytest.approx(tr.best_energy, rel=1e-12)
        lo, hi = small_model.hand.lower, small_model.hand.upper
        for h in (g.left, g.right):
            assert (h.thetas >= lo - 1e-12).all()
            assert (h.thetas <= hi + 1e-12).all()


def test_optimize_batch_empty():
    assert optimize_batch(None, []) == []


def test_best_energy_is_a_lower_envelope(small_model, two_grasps):
    st = small_model.state_from_grasps(two_grasps)
    e0 = small_model.evaluate(*st)["total"]
    out = optimize_batch(small_model, two_grasps,
                         OptimizerConfig(steps=25, seed=7))
    for i, (_, tr) in enumerate(out):
        assert tr.best_energy <= e0[i] + 1e-12
        assert tr.best_energy <= tr.energy.min() + 1e-12


def test_optimize_batch_deterministic(small_model, two_grasps):
    cfg = OptimizerConfig(steps=8, seed=13)
    a = optimize_batch(small_model, two_grasps, cfg)
    b = optimize_batch(small_model, two_grasps, cfg)
    for (ga, ta), (gb, tb) in zip(a, b):
        assert np.array_equal(ta.energy, tb.energy)
        assert np.array_equal(ta.accepted, tb.accepted)
        assert np.array_equal(ga.left.translation, gb.left.translation)
        assert np.array_equal(ga.right.thetas, gb.right.thetas)
    c = optimize_batch(small_model, two_grasps,
                       OptimizerConfig(steps=8, seed=14))
    assert any(not np.array_equal(ta.energy, tc.energy)
               for (_, ta), (_, tc) in zip(a, c))


def test_chains_do_not_depend_on_batching(small_model, two_grasps):
    # candidate i draws from substream (seed, i): running a candidate alone
    # must reproduce its trajectory from the batched run
    cfg = OptimizerConfig(steps=6, seed=21)
    batched = optimize_batch(small_model, two_grasps, cfg)
    solo0 = optimize_batch(small_model, two_grasps[:1], cfg)
    assert np.array_equal(batched[0][1].energy, solo0[0][1].energy)
    assert np.array_equal(batched[0][1].accepted, solo0[0][1].accepted)


def test_optimize_wrapper_matches_batch(small_obj, small_model, two_grasps):
    cfg = OptimizerConfig(steps=5, seed=3)
    g_b, tr_b = optimize_batch(small_model, two_grasps[:1], cfg)[0]
    g_s, tr_s = optimize(small_obj, two_grasps[0], cfg=cfg,
                         model=small_model)
    assert np.array_equal(tr_b.energy, tr_s.energy)
    assert np.array_equal(g_b.left.translation, g_s.left.translation)


def test_trace_csv_roundtrip(tmp_path, small_model, two_grasps):
    out = optimize_batch(small_model, two_grasps[:1],
                         OptimizerConfig(steps=4, seed=1))
    trace = out[0][1]
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "energy", "accepted"]
    assert len(rows) == 1 + trace.energy.size
    got_e = np.array([float(r[1]) for r in rows[1:]])
    got_a = np.array([bool(int(r[2])) for r in rows[1:]])
    assert np.array_equal(got_e, trace.energy)  # repr round-trips exactly
    assert np.array_equal(got_a, trace.accepted)
