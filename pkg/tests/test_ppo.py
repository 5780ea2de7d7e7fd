"""Tests for the clipped-surrogate trainer and its building blocks."""

import math

import numpy as np
import pytest

from fleetlab import nn, ppo
from fleetlab.errors import InvalidArgument
from fleetlab.model import action_count
from fleetlab.reduce import obs_dim, vehicle_feature_dim

from conftest import tiny_config
from oracles import central_difference


def test_clip_schedule_decays_geometrically_to_floor():
    assert ppo.clip_schedule(1, 0.1, 0.97) == pytest.approx(0.097)
    assert ppo.clip_schedule(2, 0.1, 0.97) == pytest.approx(0.1 * 0.97 ** 2)
    # far enough out the floor binds
    assert ppo.clip_schedule(500, 0.1, 0.97) == 0.01
    assert ppo.clip_schedule(10, 0.2, 0.5, floor=0.05) == pytest.approx(0.05)


def test_default_config_values():
    p = ppo.PpoConfig()
    assert p.policy_iterations == 30
    assert p.initial_clip == 0.1
    assert p.clip_decay == 0.97
    assert p.lr_policy == 5e-4
    assert p.lr_value == 3e-4
    assert p.batch_policy == 1024
    assert p.batch_value == 1024
    assert p.policy_update_steps == 20
    assert p.value_update_steps == 100


def test_config_validation():
    with pytest.raises(InvalidArgument):
        ppo.PpoConfig(trajectories_per_iter=0).validate()
    with pytest.raises(InvalidArgument):
        ppo.PpoConfig(initial_clip=0.0).validate()
    with pytest.raises(InvalidArgument):
        ppo.PpoConfig(days_per_trajectory=0).validate()


def _collect(cfg, seed=0, days=2, hidden=8):
    pcfg = ppo.PpoConfig(seed=seed, hidden=hidden)
    pset, vset = ppo.init_networks(cfg, pcfg)
    trace = ppo.collect_trajectory(cfg, pset, days, np.random.default_rng(seed))
    return pset, vset, trace


def test_collect_trajectory_shapes(tiny):
    pset, vset, trace = _collect(tiny)
    L = len(trace)
    assert trace.obs.shape == (L, obs_dim(tiny))
    assert trace.veh.shape == (L, vehicle_feature_dim(tiny))
    assert trace.mask.shape == (L, action_count(tiny))
    assert trace.old_prob.shape == (L,)
    assert (trace.old_prob > 0).all()
    assert trace.mask[np.arange(L), trace.action].all()
    # one atomic record per vehicle per epoch
    assert L == 2 * tiny.horizon_steps * tiny.fleet_size
    assert trace.terminal_t == 0


def test_estimate_g_is_mean_daily_reward(tiny):
    _, _, trace = _collect(tiny, days=3)
    g = ppo.estimate_g([trace], 3)
    assert g == pytest.approx(math.fsum(trace.reward.tolist()) / 3)
    with pytest.raises(InvalidArgument):
        ppo.estimate_g([], 3)


def test_value_targets_are_bias_adjusted_tail_sums(tiny):
    _, _, trace = _collect(tiny, days=2)
    g = ppo.estimate_g([trace], 2)
    targets = ppo.value_targets(trace, g, tiny)
    bias = g / (tiny.horizon_steps * tiny.fleet_size)
    adj = trace.reward - bias
    # brute-force tail sums
    want = np.array([adj[i:].sum() for i in range(len(adj))])
    np.testing.assert_allclose(targets, want, atol=1e-9)
    # total bias removal: first target is total reward minus g * days
    assert targets[0] == pytest.approx(trace.reward.sum() - g * 2, abs=1e-9)


def test_advantages_use_next_observation(tiny):
    pset, vset, trace = _collect(tiny, days=2)
    g = ppo.estimate_g([trace], 2)
    adv = ppo.compute_advantages(trace, vset, g, tiny)
    bias = g / (tiny.horizon_steps * tiny.fleet_size)
    # check one interior step by hand
    i = 3
    h_i = nn.forward_value(vset, trace.obs[i], int(trace.t[i]))
    h_n = nn.forward_value(vset, trace.obs[i + 1], int(trace.t[i + 1]))
    assert adv[i] == pytest.approx(trace.reward[i] - bias + h_n - h_i)
    # the final step bootstraps on the terminal observation
    h_last = nn.forward_value(vset, trace.obs[-1], int(trace.t[-1]))
    h_term = nn.forward_value(vset, trace.terminal_obs, trace.terminal_t)
    assert adv[-1] == pytest.approx(trace.reward[-1] - bias + h_term - h_last)


def test_surrogate_terms_clip_only_above():
    old = np.array([0.5, 0.5, 0.5])
    new = np.array([0.9, 0.5, 0.1])       # rho = 1.8, 1.0, 0.2
    adv = np.array([1.0, 1.0, -1.0])
    terms, clipped = ppo.surrogate_terms(new, old, adv, eps=0.2)
    # rho=1.8, A>0: clipped at 1.2
    assert terms[0] == pytest.approx(1.2)
    assert clipped[0]
    # rho=1.0: untouched
    assert terms[1] == pytest.approx(1.0)
    assert not clipped[1]
    # rho=0.2, A<0: min picks the unclipped (more negative is not chosen;
    # min(0.2*-1, 0.8*-1) = -0.8)
    assert terms[2] == pytest.approx(-0.8)


def test_ppo_update_gradient_matches_finite_difference(tiny):
    """The analytic surrogate gradient inside ppo_update agrees with a
    central-difference probe of the clipped objective."""
    rng = np.random.default_rng(11)
    pcfg = ppo.PpoConfig(seed=1, hidden=6, policy_update_steps=1,
                         batch_policy=10 ** 9, lr_policy=0.0)
    pset, vset, trace = _collect(tiny, seed=1, days=1, hidden=6)
    g = ppo.estimate_g([trace], 1)
    adv = ppo.compute_advantages(trace, vset, g, tiny)
    eps_m = 0.2

    def objective() -> float:
        terms = []
        for i in range(len(trace)):
            p = nn.forward_policy(pset, trace.obs[i], trace.veh[i],
                                  trace.mask[i], int(trace.t[i]))
            term, _ = ppo.surrogate_terms(
                np.array([p[trace.action[i]]]),
                np.array([trace.old_prob[i]]), np.array([adv[i]]), eps_m)
            terms.append(float(term[0]))
        return math.fsum(terms) / len(trace)

    # analytic gradient: run one update step with lr=0 and capture Adam's m
    # buffer (after one step m = 0.1 * grad of the *descent* objective)
    adam, _ = ppo.ppo_update(pset, [trace], adv, eps_m, pcfg,
                             np.random.default_rng(0))
    params = [p for net in pset.nets for p in net.params()]
    checked = 0
    for p, m_buf in zip(params, adam.m):
        grad = -m_buf / 0.1  # ascent gradient
        flat, gflat = p.ravel(), grad.ravel()
        take = rng.choice(flat.size, size=min(4, flat.size), replace=False)
        for i in take:
            orig = flat[i]

            def f(val, flat=flat, i=i, orig=orig):
                flat[i] = val
                out = objective()
                flat[i] = orig
                return out

            num = central_difference(f, orig, h=1e-5)
            assert gflat[i] == pytest.approx(num, rel=2e-4, abs=1e-8), (
                f"param idx {i}")
            checked += 1
    assert checked >= 20


def test_fit_value_reduces_loss(tiny):
    pset, vset, trace = _collect(tiny, days=2)
    g = ppo.estimate_g([trace], 2)
    targets = ppo.value_targets(trace, g, tiny)
    pcfg = ppo.PpoConfig(hidden=8, value_update_steps=60, lr_value=3e-3,
                         batch_value=4096)
    _, losses = ppo.fit_value(vset, trace.obs, trace.t, targets, pcfg,
                              np.random.default_rng(0))
    assert losses[-1] < losses[0]


def test_train_smoke_and_reports(tiny):
    pcfg = ppo.PpoConfig(policy_iterations=2, trajectories_per_iter=2,
                         days_per_trajectory=1, hidden=6, eval_days=1,
                         value_update_steps=5, policy_update_steps=2,
                         early_stop_patience=10, seed=3)
    lines = []
    result = ppo.train(tiny, pcfg, log=lines.append)
    assert len(result.reports) == 2
    assert not result.stopped_early
    assert len(lines) == 2
    for r in result.reports:
        assert math.isfinite(r.g_estimate)
        assert math.isfinite(r.eval_reward)
        assert 0.0 <= r.clip_fraction <= 1.0


def test_train_is_deterministic_for_same_seed(tiny):
    pcfg = ppo.PpoConfig(policy_iterations=1, trajectories_per_iter=2,
                         days_per_trajectory=1, hidden=6, eval_days=1,
                         value_update_steps=3, policy_update_steps=2, seed=4)
    r1 = ppo.train(tiny, pcfg)
    r2 = ppo.train(tiny, pcfg)
    assert r1.reports[0].g_estimate == r2.reports[0].g_estimate
    assert r1.reports[0].eval_reward == r2.reports[0].eval_reward
    for a, b in zip(r1.policy.nets[0].params(), r2.policy.nets[0].params()):
        np.testing.assert_array_equal(a, b)


def test_checkpoints_written(tmp_path, tiny):
    pcfg = ppo.PpoConfig(policy_iterations=1, trajectories_per_iter=1,
                         days_per_trajectory=1, hidden=6, eval_days=1,
                         value_update_steps=2, policy_update_steps=1, seed=5)
    ppo.train(tiny, pcfg, checkpoint_dir=str(tmp_path))
    d = tmp_path / "iter_1"
    assert (d / "policy.bin").exists()
    assert (d / "value.bin").exists()
    assert (d / "manifest.json").exists()
    back = nn.load_set(d / "policy.bin")
    assert back.kind == "policy"
