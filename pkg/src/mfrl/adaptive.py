"""Alignment-driven multi-fidelity training.

At every step the HF policy's mean action is compared with each LF policy's
mean action by cosine similarity. A cosine-annealed threshold decides which
LF models count as aligned, an epsilon-greedy rule picks the model that acts
and evaluates, and after every episode the aligned contiguous stretches of LF
experience are copied into the HF buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    DEFAULT_A_MAX, FIDELITIES, LF_MODELS, BufferSet, FidelityId, Sequence, Transition,
    apply_action,
)
from .env import DesignEnv, sample_seed_design
from .metrics import RunMetrics
from .policy import (
    Agent, PpoBatch, PpoConfig, batch_log_prob, compute_gae, init_agent, policy_mean,
    ppo_update, sample_action, value_estimate,
)

THETA_TAIL_MODES = ("strict", "printed")
LOGPROB_SOURCES = ("hf_assembly", "behavior")


@dataclass
class AdaptiveConfig:
    episode_count: int = 1200
    episode_length: int = 20
    epsilon: float = 0.1
    batch_size: int = 400
    align_norm_tol: float = 1e-8
    theta_tail_mode: str = "strict"
    theta_override: float | None = None
    a_max: float = DEFAULT_A_MAX
    hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = 0.0
    # where old log-probs of LF experience copied into the HF buffer come from
    lf_logprob_source: str = "hf_assembly"

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if self.episode_count < 0 or self.batch_size < 1:
            raise ValueError("episode_count must be >= 0 and batch_size >= 1")
        if self.theta_tail_mode not in THETA_TAIL_MODES:
            raise ValueError(f"theta_tail_mode must be one of {THETA_TAIL_MODES}")
        if self.lf_logprob_source not in LOGPROB_SOURCES:
            raise ValueError(f"lf_logprob_source must be one of {LOGPROB_SOURCES}")


@dataclass(frozen=True)
class ModelChoiceOutcome:
    model: FidelityId
    aligned: bool
    probabilities: tuple[float, float, float]


class EvaluationError(RuntimeError):
    pass


def cosine_similarity(u, v, tol: float = 1e-8) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < tol or nv < tol:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def alignment_threshold(e: int, ep_max: int, tail_mode: str = "strict") -> float:
    """Cosine threshold: 0 (90 degrees) at e=0 rising to 1 (0 degrees) at 0.9*ep_max.

    ``tail_mode="printed"`` returns 0 for the final tenth of training instead
    of holding the strict value.
    """
    horizon = 0.9 * ep_max
    if e >= horizon:
        return 1.0 if tail_mode == "strict" else 0.0
    return math.cos(math.pi / 4.0 * (1.0 + math.cos(math.pi * e / horizon)))


def model_probabilities(s_cos1: float, s_cos2: float, epsilon: float, theta: float):
    """``(p_LF1, p_LF2, p_HF)``; similarity equal to theta is *not* aligned."""
    a1, a2 = s_cos1 > theta, s_cos2 > theta
    if a1 and a2:
        return ((1 - epsilon) / 2, (1 - epsilon) / 2, epsilon)
    if a1:
        return (1 - epsilon, epsilon / 2, epsilon / 2)
    if a2:
        return (epsilon / 2, 1 - epsilon, epsilon / 2)
    return (epsilon / 2, epsilon / 2, 1 - epsilon)


def choose_model(s_cos1, s_cos2, epsilon, theta, rng: np.random.Generator) -> ModelChoiceOutcome:
    probs = model_probabilities(s_cos1, s_cos2, epsilon, theta)
    k = int(rng.choice(3, p=probs))
    # ties at the maximum all count as aligned
    return ModelChoiceOutcome(FIDELITIES[k], probs[k] == max(probs), probs)


def record_transition(buffers: BufferSet, t: int, model: FidelityId, prev_model, tr: Transition,
                      episode_id: int = 0) -> None:
    if tr.model != model:
        raise ValueError("transition model differs from the acting model")
    buf = buffers.buffers[model]
    if t > 0 and model == prev_model:
        buf[-1].transitions.append(tr)
    else:
        buf.append(Sequence([tr], episode_id))


def aligned_runs(transitions: list[Transition]) -> list[list[Transition]]:
    runs, cur = [], []
    for tr in transitions:
        if tr.aligned:
            cur.append(tr)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def augment_hf_buffer(buffers: BufferSet) -> int:
    """Copy maximal aligned runs of not-yet-scanned LF sequences into the HF buffer."""
    added = 0
    for model in LF_MODELS:
        seqs = buffers.buffers[model]
        for seq in seqs[buffers.augment_cursor[model]:]:
            for run in aligned_runs(seq.transitions):
                buffers.b_hf.append(Sequence(list(run), seq.episode_id))
                added += 1
        buffers.augment_cursor[model] = len(seqs)
    return added


def assemble_training_batch(
    buffers: BufferSet,
    model: FidelityId,
    agents: dict[FidelityId, Agent],
    batch_size: int,
    ppo_cfg: PpoConfig,
    lf_logprob_source: str = "hf_assembly",
) -> PpoBatch | None:
    """Build the PPO batch for ``model``'s buffer, or ``None`` if under ``batch_size``.

    Every value estimate (per state and bootstrap) and every old log-prob
    comes from the buffer owner's current networks, so LF rewards copied into
    the HF buffer are bootstrapped with HF values.
    """
    seqs = buffers.buffers[model]
    n = sum(len(s) for s in seqs)
    if n == 0 or n < batch_size:
        return None
    agent = agents[model]
    trs = [tr for seq in seqs for tr in seq.transitions]
    states = np.array([tr.s for tr in trs])
    actions = np.array([tr.a for tr in trs])
    rewards = np.array([tr.r for tr in trs])
    values = value_estimate(agent.value, states)
    bootstraps = value_estimate(agent.value, np.array([seq.transitions[-1].s_next for seq in seqs]))
    adv = np.empty(n)
    ret = np.empty(n)
    i = 0
    for seq, boot in zip(seqs, bootstraps):
        j = i + len(seq)
        adv[i:j], ret[i:j] = compute_gae(rewards[i:j], values[i:j], boot, ppo_cfg.gamma, ppo_cfg.gae_lambda)
        i = j
    old_lp = batch_log_prob(agent.policy, states, actions)
    if lf_logprob_source == "behavior":
        foreign = np.array([tr.model != model for tr in trs])
        old_lp[foreign] = [tr.log_prob for tr in trs if tr.model != model]
    return PpoBatch(states, actions, old_lp, adv, ret)


@dataclass
class TrainingStreams:
    """Independent RNG sub-streams so one consumer cannot shift another."""

    init: np.random.Generator
    seeds: np.random.Generator
    choice: np.random.Generator
    action: np.random.Generator
    ppo: np.random.Generator

    @classmethod
    def from_rng(cls, rng: np.random.Generator) -> "TrainingStreams":
        return cls(*rng.spawn(5))


def initial_agents(cfg: AdaptiveConfig, ppo_cfg: PpoConfig, rng: np.random.Generator) -> dict[FidelityId, Agent]:
    base = init_agent(rng, cfg.hidden, cfg.a_max, cfg.init_log_std, ppo_cfg.lr)
    return {m: base.copy() for m in FIDELITIES}


ModelSelector = Callable[[int, int, np.ndarray, dict, np.random.Generator], tuple[FidelityId, bool, float]]


def run_training_loop(
    env: DesignEnv,
    cfg: AdaptiveConfig,
    ppo_cfg: PpoConfig,
    rng: np.random.Generator,
    select: ModelSelector,
    augment: bool,
    on_update: Callable[[int, FidelityId, BufferSet], None] | None = None,
) -> tuple[dict[FidelityId, Agent], RunMetrics]:
    """Shared episode loop; ``select(e, t, s, agents, rng) -> (model, aligned, theta)``.

    ``on_update(e, model, buffers)`` is called after each training trigger,
    once the trained buffer has been cleared.
    """
    streams = TrainingStreams.from_rng(rng)
    agents = initial_agents(cfg, ppo_cfg, streams.init)
    buffers = BufferSet()
    metrics = RunMetrics(cfg.episode_length)
    for e in range(cfg.episode_count):
        s = sample_seed_design(streams.seeds)
        prev_model = None
        last_eval: dict[FidelityId, tuple[np.ndarray, float]] = {}
        counts = {m: 0 for m in FIDELITIES}
        ret = 0.0
        theta = float("nan")
        for t in range(cfg.episode_length):
            model, aligned, theta = select(e, t, s, agents, streams.choice)
            a, lp = sample_action(agents[model].policy, s, streams.action)
            s_next = apply_action(s, a)
            try:
                # improvement is always judged by the acting model: after a switch it
                # re-evaluates the current design (charged); at t=0 there is no baseline
                cached = last_eval.get(model)
                if cached is not None and np.array_equal(cached[0], s):
                    q_prev = cached[1]
                elif t > 0:
                    q_prev = env.evaluate(model, s).q
                else:
                    q_prev = None
                result = env.evaluate(model, s_next)
            except Exception as exc:
                raise EvaluationError(f"episode {e}, step {t}, model {model.name}: {exc}") from exc
            r = env.reward(result.q if q_prev is None else q_prev, result)
            last_eval[model] = (s_next, result.q)
            record_transition(buffers, t, model, prev_model, Transition(s, a, r, s_next, aligned, model, t, lp), e)
            counts[model] += 1
            ret += r
            prev_model = model
            s = s_next
        n_aug = augment_hf_buffer(buffers) if augment else 0
        for model in FIDELITIES:
            batch = assemble_training_batch(
                buffers, model, agents, cfg.batch_size, ppo_cfg, cfg.lf_logprob_source
            )
            if batch is None:
                continue
            agents[model], _ = ppo_update(agents[model], batch, ppo_cfg, streams.ppo)
            metrics.n_updates[model] += 1
            buffers.clear(model)
            if on_update is not None:
                on_update(e, model, buffers)
        metrics.record_episode(counts, theta, ret, env.ledger, n_aug)
    return agents, metrics


def run_adaptive_training(
    env: DesignEnv, cfg: AdaptiveConfig, ppo_cfg: PpoConfig, rng: np.random.Generator, on_update=None
) -> tuple[dict[FidelityId, Agent], RunMetrics]:
    def select(e, t, s, agents, choice_rng):
        if cfg.theta_override is not None:
            theta = cfg.theta_override
        else:
            theta = alignment_threshold(e, cfg.episode_count, cfg.theta_tail_mode)
        m_hf = policy_mean(agents[FidelityId.HF].policy, s)
        c1 = cosine_similarity(policy_mean(agents[FidelityId.LF1].policy, s), m_hf, cfg.align_norm_tol)
        c2 = cosine_similarity(policy_mean(agents[FidelityId.LF2].policy, s), m_hf, cfg.align_norm_tol)
        out = choose_model(c1, c2, cfg.epsilon, theta, choice_rng)
        return out.model, out.aligned, theta

    return run_training_loop(env, cfg, ppo_cfg, rng, select, augment=True, on_update=on_update)
