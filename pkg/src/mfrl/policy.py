"""Per-fidelity actor/critic: tanh-squashed Gaussian policy, GAE and clipped PPO."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import DEFAULT_A_MAX, N_VARS
from .nn import AdamState, MlpParams, VectorAdam, adam_step, init_mlp, mlp_backward, mlp_forward

log = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# keeps atanh finite for actions stored at float saturation
_SQUASH_CLIP = 1.0 - 1e-9


@dataclass
class GaussianPolicy:
    mean_net: MlpParams
    log_std: np.ndarray
    a_max: float = DEFAULT_A_MAX

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.log_std.copy(), self.a_max)


@dataclass
class ValueFunction:
    net: MlpParams

    def copy(self) -> "ValueFunction":
        return ValueFunction(self.net.copy())


@dataclass
class PpoConfig:
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 4
    minibatch: int = 64
    value_coeff: float = 0.5
    entropy_coeff: float = 0.0
    lr: float = 3e-4

    def __post_init__(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if self.epochs < 1 or self.minibatch < 1:
            raise ValueError("epochs and minibatch must be positive")


@dataclass
class Agent:
    """Actor, critic and their optimizer state for one fidelity model."""

    policy: GaussianPolicy
    value: ValueFunction
    policy_opt: AdamState
    log_std_opt: VectorAdam
    value_opt: AdamState
    n_updates: int = 0

    def copy(self) -> "Agent":
        return replace(self, policy=self.policy.copy(), value=self.value.copy())


def init_agent(
    rng: np.random.Generator,
    hidden=(64, 64),
    a_max: float = DEFAULT_A_MAX,
    init_log_std: float = 0.0,
    lr: float = 3e-4,
) -> Agent:
    sizes = (N_VARS, *hidden)
    acts = ("tanh",) * len(hidden) + ("linear",)
    mean_net = init_mlp((*sizes, N_VARS), acts, rng)
    vnet = init_mlp((*sizes, 1), acts, rng)
    policy = GaussianPolicy(mean_net, np.full(N_VARS, float(init_log_std)), a_max)
    return Agent(
        policy,
        ValueFunction(vnet),
        AdamState.for_params(mean_net, lr=lr),
        VectorAdam(lr=lr),
        AdamState.for_params(vnet, lr=lr),
    )


def policy_mean(p: GaussianPolicy, s) -> np.ndarray:
    """Raw (pre-squash) mean of the action distribution."""
    return mlp_forward(p.mean_net, s)


def value_estimate(v: ValueFunction, s):
    out = mlp_forward(v.net, s)
    return float(out[0]) if out.ndim == 1 else out[:, 0]


def _log_one_minus_tanh_sq(z: np.ndarray) -> np.ndarray:
    # log(1 - tanh(z)^2) without cancellation for large |z|
    return 2.0 * (math.log(2.0) - z - np.logaddexp(0.0, -2.0 * z))


def _gaussian_log_prob(z, mean, log_std, a_max) -> np.ndarray:
    std = np.exp(log_std)
    logp = -0.5 * ((z - mean) / std) ** 2 - log_std - _HALF_LOG_2PI
    jac = math.log(a_max) + _log_one_minus_tanh_sq(z)
    return np.sum(logp - jac, axis=-1)


def sample_action(p: GaussianPolicy, s, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    mean = policy_mean(p, s)
    z = mean + np.exp(p.log_std) * rng.standard_normal(mean.shape)
    a = p.a_max * np.tanh(z)
    return a, float(_gaussian_log_prob(z, mean, p.log_std, p.a_max))


def action_log_prob(p: GaussianPolicy, s, a) -> float:
    """Log density of a squashed action; ``|a| < a_max`` is required."""
    u = np.asarray(a, dtype=np.float64) / p.a_max
    if np.any(np.abs(u) >= 1.0):
        raise ValueError("action component at or beyond the bound; atanh is singular")
    z = np.arctanh(u)
    return float(_gaussian_log_prob(z, policy_mean(p, s), p.log_std, p.a_max))


def _pre_squash(actions: np.ndarray, a_max: float) -> np.ndarray:
    return np.arctanh(np.clip(actions / a_max, -_SQUASH_CLIP, _SQUASH_CLIP))


def batch_log_prob(p: GaussianPolicy, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    z = _pre_squash(actions, p.a_max)
    return _gaussian_log_prob(z, policy_mean(p, states), p.log_std, p.a_max)


def compute_gae(rewards, values, bootstrap: float, gamma: float, lam: float):
    """Return ``(advantages, returns)`` for one contiguous trajectory."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("compute_gae needs at least one transition")
    if values.shape != rewards.shape:
        raise ValueError("rewards and values must have equal length")
    next_values = np.append(values[1:], bootstrap)
    deltas = rewards + gamma * next_values - values
    adv = np.empty_like(deltas)
    acc = 0.0
    for t in range(deltas.size - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv, adv + values


@dataclass
class PpoBatch:
    states: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.returns)

    def subset(self, idx) -> "PpoBatch":
        return PpoBatch(
            self.states[idx], self.actions[idx], self.old_log_probs[idx],
            self.advantages[idx], self.returns[idx],
        )


@dataclass
class PpoGrads:
    mean_net: object
    log_std: np.ndarray
    value_net: object
    info: dict = field(default_factory=dict)


def clipped_surrogate(ratio, adv, clip_ratio: float):
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv)


def ppo_loss_and_grads(
    policy: GaussianPolicy, vf: ValueFunction, mb: PpoBatch, cfg: PpoConfig
) -> tuple[float, PpoGrads]:
    """Loss to *minimise* (negated clipped objective) and its exact gradients.

    loss = -mean(min(r A, clip(r) A)) + value_coeff * mean((v - R)^2) - entropy_coeff * H
    """
    n = len(mb)
    z = _pre_squash(mb.actions, policy.a_max)
    mean = mlp_forward(policy.mean_net, mb.states)
    std = np.exp(policy.log_std)
    logp = _gaussian_log_prob(z, mean, policy.log_std, policy.a_max)
    ratio = np.exp(logp - mb.old_log_probs)
    adv = mb.advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    surr = clipped_surrogate(ratio, adv, cfg.clip_ratio)
    # d surr / d ratio: A where the unclipped branch is the active min, else 0
    d_ratio = np.where(ratio * adv <= clipped * adv, adv, 0.0)
    d_logp = -(d_ratio * ratio) / n

    resid = (z - mean) / std
    g_mean = d_logp[:, None] * (resid / std)
    g_log_std = (d_logp[:, None] * (resid ** 2 - 1.0)).sum(axis=0)
    entropy = float(np.sum(policy.log_std) + N_VARS * (0.5 + _HALF_LOG_2PI))
    g_log_std = g_log_std - cfg.entropy_coeff

    v = mlp_forward(vf.net, mb.states)[:, 0]
    v_err = v - mb.returns
    v_loss = float(np.mean(v_err ** 2))
    g_v = (cfg.value_coeff * 2.0 * v_err / n)[:, None]

    loss = -float(np.mean(surr)) + cfg.value_coeff * v_loss - cfg.entropy_coeff * entropy
    grads = PpoGrads(
        mlp_backward(policy.mean_net, mb.states, g_mean),
        g_log_std,
        mlp_backward(vf.net, mb.states, g_v),
        info={"ratio": ratio, "v_loss": v_loss, "entropy": entropy},
    )
    return loss, grads


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if adv.size < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(
    agent: Agent, batch: PpoBatch, cfg: PpoConfig, rng: np.random.Generator
) -> tuple[Agent, dict]:
    """Run ``cfg.epochs`` passes of minibatch clipped-PPO on ``batch``.

    A non-finite loss aborts the whole update: the original agent is returned
    and the stats carry ``aborted=True`` with the offending epoch/minibatch.
    """
    if len(batch) == 0:
        raise ValueError("ppo_update needs a non-empty batch")
    batch = replace(batch, advantages=normalize_advantages(batch.advantages))
    policy, vf = agent.policy.copy(), agent.value.copy()
    p_opt, s_opt, v_opt = agent.policy_opt, agent.log_std_opt, agent.value_opt
    losses = []
    n = len(batch)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            mb = batch.subset(order[start:start + cfg.minibatch])
            loss, g = ppo_loss_and_grads(policy, vf, mb, cfg)
            if not np.isfinite(loss):
                log.warning("non-finite PPO loss at epoch %d, minibatch %d; update aborted", epoch, start)
                return agent, {"aborted": True, "epoch": epoch, "minibatch_start": start}
            policy.mean_net, p_opt = adam_step(policy.mean_net, g.mean_net, p_opt)
            new_log_std, s_opt = s_opt.update(policy.log_std, g.log_std)
            policy.log_std = np.clip(new_log_std, LOG_STD_MIN, LOG_STD_MAX)
            vf.net, v_opt = adam_step(vf.net, g.value_net, v_opt)
            losses.append(loss)
    new_agent = Agent(policy, vf, p_opt, s_opt, v_opt, agent.n_updates + 1)
    return new_agent, {"aborted": False, "mean_loss": float(np.mean(losses)), "n": n}
