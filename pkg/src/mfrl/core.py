"""Design-space types, transitions and per-fidelity experience buffers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

N_VARS = 4
DEFAULT_A_MAX = 0.1


class FidelityId(enum.Enum):
    LF1 = "lf1"
    LF2 = "lf2"
    HF = "hf"


FIDELITIES = (FidelityId.LF1, FidelityId.LF2, FidelityId.HF)
LF_MODELS = (FidelityId.LF1, FidelityId.LF2)


def design_vector(x) -> np.ndarray:
    """Validate and copy ``x`` into a float64 design vector on [0, 1]^4."""
    arr = np.array(x, dtype=np.float64)
    if arr.shape != (N_VARS,):
        raise ValueError(f"design vector must have shape ({N_VARS},), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"design vector outside [0, 1]: {arr}")
    return arr


@dataclass(frozen=True)
class DesignState:
    arm_length: float
    battery_idx: int
    motor_idx: int
    prop_idx: int


def decode_design(x, catalog_sizes=(10, 10, 10), arm_range=(0.2, 0.8)) -> DesignState:
    """Map a normalized design vector to arm length and catalog indices."""
    lo, hi = arm_range
    if not hi > lo:
        raise ValueError("arm_range must be non-degenerate")
    if any(n < 1 for n in catalog_sizes):
        raise ValueError("catalog sizes must be >= 1")
    idx = [min(int(math.floor(x[i + 1] * n)), n - 1) for i, n in enumerate(catalog_sizes)]
    return DesignState(lo + float(x[0]) * (hi - lo), *idx)


def apply_action(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.float64) + a, 0.0, 1.0)


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    aligned: bool
    model: FidelityId
    step: int = 0
    log_prob: float = float("nan")  # under the acting policy at collection time


@dataclass
class Sequence:
    """Contiguous run of transitions gathered from a single fidelity model."""

    transitions: list[Transition]
    episode_id: int

    @property
    def model(self) -> FidelityId:
        return self.transitions[0].model

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass
class BufferSet:
    buffers: dict[FidelityId, list[Sequence]] = field(
        default_factory=lambda: {m: [] for m in FIDELITIES}
    )
    # index of the first LF sequence not yet scanned for augmentation
    augment_cursor: dict[FidelityId, int] = field(
        default_factory=lambda: {m: 0 for m in LF_MODELS}
    )

    @property
    def b_hf(self) -> list[Sequence]:
        return self.buffers[FidelityId.HF]

    @property
    def b_lf1(self) -> list[Sequence]:
        return self.buffers[FidelityId.LF1]

    @property
    def b_lf2(self) -> list[Sequence]:
        return self.buffers[FidelityId.LF2]

    def n_transitions(self, model: FidelityId) -> int:
        return sum(len(seq) for seq in self.buffers[model])

    def clear(self, model: FidelityId) -> None:
        self.buffers[model] = []
        if model in self.augment_cursor:
            self.augment_cursor[model] = 0
