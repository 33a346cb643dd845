import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfrl.nn import mlp_forward, zeros_like_params
from mfrl.policy import (
    LOG_STD_MAX, LOG_STD_MIN, GaussianPolicy, PpoBatch, PpoConfig, action_log_prob, batch_log_prob,
    clipped_surrogate, compute_gae, init_agent, policy_mean, ppo_loss_and_grads, ppo_update,
    sample_action, value_estimate,
)
from oracles import central_diff, gae_double_sum, rel_err

S = np.array([0.5, 0.5, 0.5, 0.5])


def biased_policy(mean, log_std, a_max=0.1):
    """Zero-weight net whose output is exactly the given mean."""
    agent = init_agent(np.random.default_rng(0), hidden=(8,), a_max=a_max)
    net = zeros_like_params(agent.policy.mean_net)
    net.biases[-1] = np.array(mean, float)
    return GaussianPolicy(net, np.array(log_std, float), a_max)


def test_policy_mean_examples():
    agent = init_agent(np.random.default_rng(1))
    zero = GaussianPolicy(zeros_like_params(agent.policy.mean_net), np.zeros(4))
    assert not np.any(policy_mean(zero, S))
    np.testing.assert_array_equal(policy_mean(agent.policy, S), mlp_forward(agent.policy.mean_net, S))
    np.testing.assert_array_equal(policy_mean(agent.policy, S), policy_mean(agent.policy.copy(), S))


def test_value_estimate_examples():
    agent = init_agent(np.random.default_rng(2))
    assert value_estimate(agent.value, S) == float(mlp_forward(agent.value.net, S)[0])
    zero = type(agent.value)(zeros_like_params(agent.value.net))
    assert value_estimate(zero, S) == 0.0


def test_degenerate_std_gives_squashed_mean():
    p = biased_policy([0.3, -1.0, 2.0, 0.0], [-5.0] * 4)
    a, _ = sample_action(p, S, np.random.default_rng(0))
    np.testing.assert_allclose(a, 0.1 * np.tanh([0.3, -1.0, 2.0, 0.0]), atol=1e-2)


def test_zero_mean_samples_are_symmetric():
    p = biased_policy([0.0] * 4, [0.0] * 4)
    rng = np.random.default_rng(3)
    acts = np.array([sample_action(p, S, rng)[0] for _ in range(100_000)])
    se = acts.std(axis=0) / math.sqrt(len(acts))
    assert np.all(np.abs(acts.mean(axis=0)) < 3 * se)


def test_log_prob_matches_histogram_density():
    # dimensions are independent, so the joint density is the product of 1-D histograms
    p = biased_policy([0.3, -0.2, 0.0, 0.5], [-0.5, 0.0, -1.0, -0.3])
    rng = np.random.default_rng(4)
    n = 1_000_000
    z = policy_mean(p, S) + np.exp(p.log_std) * rng.standard_normal((n, 4))
    acts = p.a_max * np.tanh(z)
    edges = np.linspace(-p.a_max, p.a_max, 61)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    dens = [np.histogram(acts[:, i], bins=edges)[0] / (n * width) for i in range(4)]
    for bins in [(30, 28, 30, 35), (33, 30, 25, 38), (36, 27, 31, 40)]:
        a = np.array([centers[b] for b in bins])
        empirical = np.prod([dens[i][b] for i, b in enumerate(bins)])
        assert math.exp(action_log_prob(p, S, a)) == pytest.approx(empirical, rel=0.10)


def test_log_prob_round_trip():
    agent = init_agent(np.random.default_rng(5))
    rng = np.random.default_rng(6)
    for _ in range(200):
        s = rng.uniform(size=4)
        a, lp = sample_action(agent.policy, s, rng)
        assert action_log_prob(agent.policy, s, a) == pytest.approx(lp, abs=1e-9)
        assert batch_log_prob(agent.policy, s[None], a[None])[0] == pytest.approx(lp, abs=1e-9)


def test_density_peaks_at_squashed_mean():
    p = biased_policy([0.3, -0.2, 0.0, 0.5], [-0.5] * 4)
    at_mean = action_log_prob(p, S, 0.1 * np.tanh(policy_mean(p, S)))
    far = action_log_prob(p, S, np.array([-0.09, 0.09, 0.08, -0.09]))
    assert at_mean >= far


def test_log_std_shift_lowers_density_at_mean_by_four():
    p = biased_policy([0.3, -0.2, 0.0, 0.5], [-0.5] * 4)
    q = biased_policy([0.3, -0.2, 0.0, 0.5], [0.5] * 4)
    a = 0.1 * np.tanh(policy_mean(p, S))
    assert action_log_prob(p, S, a) - action_log_prob(q, S, a) == pytest.approx(4.0, abs=1e-12)


def test_action_at_bound_raises():
    p = biased_policy([0.0] * 4, [0.0] * 4)
    with pytest.raises(ValueError):
        action_log_prob(p, S, np.array([0.1, 0.0, 0.0, 0.0]))


# --- GAE -------------------------------------------------------------------

def test_gae_lambda_zero_is_td_error():
    r, v = np.array([0.5, -0.2, 0.1]), np.array([0.3, 0.1, -0.4])
    adv, _ = compute_gae(r, v, 0.7, 0.9, 0.0)
    np.testing.assert_array_equal(adv, r + 0.9 * np.array([0.1, -0.4, 0.7]) - v)


def test_gae_plain_returns():
    adv, ret = compute_gae([1, 1, 1], [0, 0, 0], 0.0, 1.0, 1.0)
    np.testing.assert_array_equal(adv, [3, 2, 1])
    np.testing.assert_array_equal(ret, [3, 2, 1])


def test_gae_empty_raises():
    with pytest.raises(ValueError):
        compute_gae([], [], 0.0, 0.99, 0.95)


def test_gae_random_20_step_instance():
    rng = np.random.default_rng(7)
    r, v, boot = rng.normal(size=20), rng.normal(size=20), rng.normal()
    adv, ret = compute_gae(r, v, boot, 0.99, 0.95)
    adv_o, ret_o = gae_double_sum(r, v, boot, 0.99, 0.95)
    np.testing.assert_allclose(adv, adv_o, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ret, ret_o, rtol=0, atol=1e-12)


@settings(max_examples=200)
@given(st.integers(1, 20), st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_gae_matches_brute_force(T, gamma, lam, seed):
    rng = np.random.default_rng(seed)
    r, v, boot = rng.normal(size=T), rng.normal(size=T), float(rng.normal())
    adv, ret = compute_gae(r, v, boot, gamma, lam)
    adv_o, ret_o = gae_double_sum(r, v, boot, gamma, lam)
    np.testing.assert_allclose(adv, adv_o, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ret, ret_o, rtol=0, atol=1e-12)


# --- PPO -------------------------------------------------------------------

def test_clipped_surrogate_arithmetic():
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert clipped_surrogate(1.1, 1.0, 0.2) == pytest.approx(1.1)


def test_ppo_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(clip_ratio=1.0)
    with pytest.raises(ValueError):
        PpoConfig(gamma=0.0)


def random_batch(agent, n, rng, ratio_noise=0.0):
    states = rng.uniform(size=(n, 4))
    acts = np.array([sample_action(agent.policy, s, rng)[0] for s in states])
    lp = batch_log_prob(agent.policy, states, acts) + ratio_noise * rng.normal(size=n)
    return PpoBatch(states, acts, lp, rng.normal(size=n), rng.normal(size=n))


def _flat_loss(agent, batch, cfg):
    mean_net, value_net = agent.policy.mean_net, agent.value.net
    n_m, n_s = mean_net.n_params, 4

    def f(theta):
        pol = GaussianPolicy(mean_net.with_flat(theta[:n_m]), theta[n_m:n_m + n_s], agent.policy.a_max)
        vf = type(agent.value)(value_net.with_flat(theta[n_m + n_s:]))
        return ppo_loss_and_grads(pol, vf, batch, cfg)[0]

    theta = np.concatenate([mean_net.flat(), agent.policy.log_std, value_net.flat()])
    return f, theta


def test_ppo_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    agent = init_agent(rng, hidden=(16, 16))
    cfg = PpoConfig(value_coeff=0.5, entropy_coeff=0.01)
    for trial in range(5):
        batch = random_batch(agent, 5, rng, ratio_noise=0.3)
        ratio = np.exp(batch_log_prob(agent.policy, batch.states, batch.actions) - batch.old_log_probs)
        assert np.all(np.abs(np.abs(ratio - 1) - 0.2) > 1e-3)  # away from the clip kinks
        _, g = ppo_loss_and_grads(agent.policy, agent.value, batch, cfg)
        analytic = np.concatenate([g.mean_net.flat(), g.log_std, g.value_net.flat()])
        f, theta = _flat_loss(agent, batch, cfg)
        assert rel_err(analytic, central_diff(f, theta)) < 1e-4


def test_stationary_batch_leaves_parameters_unchanged():
    rng = np.random.default_rng(9)
    agent = init_agent(rng)
    batch = random_batch(agent, 32, rng)
    batch.advantages = np.zeros(32)
    batch.returns = value_estimate(agent.value, batch.states)
    new, stats = ppo_update(agent, batch, PpoConfig(entropy_coeff=0.0), rng)
    assert not stats["aborted"]
    np.testing.assert_array_equal(new.policy.mean_net.flat(), agent.policy.mean_net.flat())
    np.testing.assert_array_equal(new.policy.log_std, agent.policy.log_std)
    np.testing.assert_array_equal(new.value.net.flat(), agent.value.net.flat())


def test_single_epoch_keeps_ratio_near_clip_range():
    rng = np.random.default_rng(10)
    cfg = PpoConfig(epochs=1)
    lo, hi = 1 - 2 * cfg.clip_ratio * 1.1, 1 + 2 * cfg.clip_ratio * 1.1
    for _ in range(5):
        agent = init_agent(rng)
        batch = random_batch(agent, 400, rng)
        new, _ = ppo_update(agent, batch, cfg, rng)
        ratio = np.exp(batch_log_prob(new.policy, batch.states, batch.actions) - batch.old_log_probs)
        r_min, r_max = float(ratio.min()), float(ratio.max())
        assert lo <= r_min and r_max <= hi, f"ratio range [{r_min:.3f}, {r_max:.3f}] outside [{lo:.2f}, {hi:.2f}]"


def test_non_finite_loss_aborts_update():
    rng = np.random.default_rng(11)
    agent = init_agent(rng)
    batch = random_batch(agent, 16, rng)
    batch.returns[3] = np.nan
    new, stats = ppo_update(agent, batch, PpoConfig(), rng)
    assert stats["aborted"] and new is agent


def test_log_std_stays_clamped():
    rng = np.random.default_rng(12)
    agent = init_agent(rng, init_log_std=1.99)
    batch = random_batch(agent, 64, rng)
    new, _ = ppo_update(agent, batch, PpoConfig(lr=0.5, entropy_coeff=10.0), rng)
    assert np.all(new.policy.log_std <= LOG_STD_MAX) and np.all(new.policy.log_std >= LOG_STD_MIN)


def test_bandit_converges_to_zero_action():
    """Fixed state, reward -|a|^2 summed over all four action dims; optimum is a = 0."""
    rng = np.random.default_rng(13)
    agent = init_agent(rng)
    s = np.array([0.3, 0.6, 0.2, 0.8])
    states = np.repeat(s[None], 64, axis=0)
    cfg = PpoConfig(epochs=4)
    for _ in range(500):
        acts = np.array([sample_action(agent.policy, s, rng)[0] for _ in range(64)])
        rewards = -np.sum(acts ** 2, axis=1)
        lp = batch_log_prob(agent.policy, states, acts)
        vals = value_estimate(agent.value, states)
        agent, _ = ppo_update(agent, PpoBatch(states, acts, lp, rewards - vals, rewards), cfg, rng)
    mean_action = agent.policy.a_max * np.tanh(policy_mean(agent.policy, s))
    assert np.all(np.abs(mean_action) < 0.05 * agent.policy.a_max)
