"""Fixed-schedule hierarchical and single-fidelity comparison agents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive import AdaptiveConfig, run_training_loop
from .core import FidelityId
from .env import DesignEnv
from .metrics import RunMetrics
from .policy import Agent, PpoConfig


@dataclass(frozen=True)
class HierarchicalSchedule:
    segments: tuple[tuple[FidelityId, int], ...]

    def validate(self, episode_length: int) -> None:
        total = sum(n for _, n in self.segments)
        if total != episode_length or any(n < 1 for _, n in self.segments):
            raise ValueError(
                f"schedule steps sum to {total}, episode length is {episode_length}"
            )

    def step_models(self) -> list[FidelityId]:
        return [m for m, n in self.segments for _ in range(n)]


HIERARCHICAL_1 = HierarchicalSchedule(((FidelityId.LF1, 7), (FidelityId.LF2, 7), (FidelityId.HF, 6)))
HIERARCHICAL_2 = HierarchicalSchedule(((FidelityId.LF2, 7), (FidelityId.LF1, 7), (FidelityId.HF, 6)))


def scaled_schedule(order: tuple[FidelityId, FidelityId], episode_length: int) -> HierarchicalSchedule:
    """35/35/30 split for episode lengths other than 20; HF gets the remainder."""
    n_lf = int(round(0.35 * episode_length))
    n_hf = episode_length - 2 * n_lf
    return HierarchicalSchedule(((order[0], n_lf), (order[1], n_lf), (FidelityId.HF, n_hf)))


def run_hierarchical_training(
    env: DesignEnv,
    schedule: HierarchicalSchedule,
    cfg: AdaptiveConfig,
    ppo_cfg: PpoConfig,
    rng: np.random.Generator,
) -> tuple[dict[FidelityId, Agent], RunMetrics]:
    """Each step's fidelity comes from ``schedule``; agents train on their own data only."""
    schedule.validate(cfg.episode_length)
    step_models = schedule.step_models()

    def select(e, t, s, agents, choice_rng):
        return step_models[t], False, float("nan")

    return run_training_loop(env, cfg, ppo_cfg, rng, select, augment=False)


def run_single_fidelity_training(
    env: DesignEnv,
    model: FidelityId,
    cfg: AdaptiveConfig,
    ppo_cfg: PpoConfig,
    rng: np.random.Generator,
) -> tuple[Agent, RunMetrics]:
    schedule = HierarchicalSchedule(((model, cfg.episode_length),))
    agents, metrics = run_hierarchical_training(env, schedule, cfg, ppo_cfg, rng)
    return agents[model], metrics
