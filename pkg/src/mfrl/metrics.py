from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FIDELITIES, FidelityId


@dataclass
class RunMetrics:
    """Per-episode training record plus the post-training HF evaluation matrix."""

    episode_length: int
    steps: list[dict[FidelityId, int]] = field(default_factory=list)
    theta: list[float] = field(default_factory=list)
    episode_return: list[float] = field(default_factory=list)
    cumulative_evals: list[dict[FidelityId, int]] = field(default_factory=list)
    cumulative_cost: list[float] = field(default_factory=list)
    n_updates: dict[FidelityId, int] = field(default_factory=lambda: {m: 0 for m in FIDELITIES})
    augmented: list[int] = field(default_factory=list)
    quality: np.ndarray | None = None  # (n_eval_seeds, episode_length)

    @property
    def n_episodes(self) -> int:
        return len(self.steps)

    def record_episode(self, counts, theta, ret, ledger, n_augmented=0) -> None:
        if sum(counts.values()) != self.episode_length:
            raise ValueError("per-episode model counts must sum to the episode length")
        self.steps.append(dict(counts))
        self.theta.append(float(theta))
        self.episode_return.append(float(ret))
        self.cumulative_evals.append(dict(ledger.counts))
        self.cumulative_cost.append(float(ledger.total_cost))
        self.augmented.append(int(n_augmented))

    def step_matrix(self) -> np.ndarray:
        """``(n_episodes, 3)`` step counts ordered LF1, LF2, HF."""
        return np.array([[c[m] for m in FIDELITIES] for c in self.steps], dtype=float).reshape(-1, 3)

    def usage_shares(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        window = self.step_matrix()[start:stop]
        total = window.sum()
        return window.sum(axis=0) / total if total else np.zeros(3)

    @property
    def total_cost(self) -> float:
        return self.cumulative_cost[-1] if self.cumulative_cost else 0.0
