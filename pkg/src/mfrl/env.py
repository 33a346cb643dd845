"""Analytic octocopter-like design problem with one HF and two regional LF models.

The HF objective keeps the three-factor product structure
``range_fraction * speed * (1 - tracking_error)`` and zeroes designs whose
component choices are incompatible. Each LF model is exact on one half of
the arm-length axis and optimistic on the other half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import FIDELITIES, FidelityId, N_VARS, design_vector
from .nn import AdamState, MlpParams, adam_step, init_mlp, mlp_backward, mlp_forward

HF_UNIT_COST = 1.78
LF_UNIT_COST = 208e-6
SURROGATE_ARCH = (4, 64, 32, 1)
SURROGATE_ACTS = ("relu", "relu", "linear")


@dataclass(frozen=True)
class EvaluationResult:
    q: float
    valid: bool

    def __post_init__(self):
        if not self.valid and self.q != 0.0:
            raise ValueError("invalid designs must carry q = 0")


@dataclass(frozen=True)
class EnvConfig:
    bias_magnitude: float = 0.6
    bias_split: float = 0.5
    validity_threshold: float = 1.6
    invalid_penalty: float = 0.2
    hf_cost: float = HF_UNIT_COST
    lf_cost: float = LF_UNIT_COST
    arm_range: tuple[float, float] = (0.2, 0.8)
    catalog_sizes: tuple[int, int, int] = (10, 10, 10)


def true_objective(x) -> float:
    """HF objective ignoring the validity rule."""
    d_frac = 1.0 - (x[0] - x[1]) ** 2
    speed = 0.5 + 0.5 * x[2]
    err = 0.5 * x[3]
    return float(d_frac * speed * (1.0 - err))


def hf_evaluate(x, cfg: EnvConfig = EnvConfig()) -> EvaluationResult:
    if x[1] + x[2] > cfg.validity_threshold:
        return EvaluationResult(0.0, False)
    return EvaluationResult(true_objective(x), True)


def lf_evaluate(i: int, x, cfg: EnvConfig = EnvConfig()) -> EvaluationResult:
    """Regionally biased surrogate; LF models never flag invalid designs."""
    if i == 1:
        bias = cfg.bias_magnitude * max(0.0, x[0] - cfg.bias_split)
    elif i == 2:
        bias = cfg.bias_magnitude * max(0.0, cfg.bias_split - x[0])
    else:
        raise ValueError(f"unknown LF model {i}")
    return EvaluationResult(min(max(true_objective(x) + bias, 0.0), 1.0), True)


def step_reward(q_prev: float, result: EvaluationResult, penalty: float = 0.2) -> float:
    return result.q - q_prev - (0.0 if result.valid else penalty)


def sample_seed_design(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=N_VARS)


@dataclass
class FidelityModel:
    id: FidelityId
    evaluate: Callable[[np.ndarray], EvaluationResult]
    unit_cost: float


@dataclass
class CostLedger:
    unit_costs: dict[FidelityId, float]
    counts: dict[FidelityId, int] = field(default_factory=lambda: {m: 0 for m in FIDELITIES})
    total_cost: float = 0.0

    def reconstruct(self) -> float:
        # fsum: correctly rounded, so independent of summation order
        return math.fsum(self.counts[m] * self.unit_costs[m] for m in FIDELITIES)


def charge(ledger: CostLedger, model: FidelityId) -> None:
    ledger.counts[model] += 1
    # recomputed from counts so the total never drifts from count * unit_cost
    ledger.total_cost = ledger.reconstruct()


def default_models(cfg: EnvConfig = EnvConfig()) -> dict[FidelityId, FidelityModel]:
    return {
        FidelityId.HF: FidelityModel(FidelityId.HF, lambda x: hf_evaluate(x, cfg), cfg.hf_cost),
        FidelityId.LF1: FidelityModel(FidelityId.LF1, lambda x: lf_evaluate(1, x, cfg), cfg.lf_cost),
        FidelityId.LF2: FidelityModel(FidelityId.LF2, lambda x: lf_evaluate(2, x, cfg), cfg.lf_cost),
    }


class DesignEnv:
    """Bundles the three evaluators with a cost ledger for one training run."""

    def __init__(self, cfg: EnvConfig = EnvConfig(), models: dict[FidelityId, FidelityModel] | None = None):
        self.cfg = cfg
        self.models = models if models is not None else default_models(cfg)
        self.ledger = CostLedger({m: self.models[m].unit_cost for m in FIDELITIES})

    def evaluate(self, model: FidelityId, x: np.ndarray) -> EvaluationResult:
        result = self.models[model].evaluate(x)
        charge(self.ledger, model)
        return result

    def reward(self, q_prev: float, result: EvaluationResult) -> float:
        return step_reward(q_prev, result, self.cfg.invalid_penalty)


@dataclass
class SurrogateFit:
    model: FidelityModel
    params: MlpParams
    train_x: np.ndarray
    train_y: np.ndarray


def predict_surrogate(params: MlpParams, x) -> np.ndarray:
    return np.clip(mlp_forward(params, x)[..., 0], 0.0, 1.0)


def train_mse(params: MlpParams, x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
              epochs: int = 300, minibatch: int = 64, lr: float = 1e-3) -> MlpParams:
    opt = AdamState.for_params(params, lr=lr)
    n = len(y)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, minibatch):
            idx = order[start:start + minibatch]
            pred = mlp_forward(params, x[idx])[:, 0]
            upstream = (2.0 * (pred - y[idx]) / len(idx))[:, None]
            params, opt = adam_step(params, mlp_backward(params, x[idx], upstream), opt)
    return params


def fit_regional_surrogate(
    region: Callable[[np.ndarray], bool],
    n_samples: int,
    rng: np.random.Generator,
    model_id: FidelityId = FidelityId.LF1,
    cfg: EnvConfig = EnvConfig(),
    epochs: int = 300,
    label: Callable[[np.ndarray], float] | None = None,
) -> SurrogateFit:
    """Train an I4-D64R-D32R-O1L regressor on HF labels drawn from ``region``."""
    label = label or (lambda x: hf_evaluate(x, cfg).q)
    xs = []
    attempts = 0
    while len(xs) < n_samples:
        if attempts >= 100 * n_samples:
            raise RuntimeError(
                f"rejection sampling found {len(xs)}/{n_samples} region samples "
                f"in {attempts} attempts"
            )
        x = rng.uniform(0.0, 1.0, size=N_VARS)
        attempts += 1
        if region(x):
            xs.append(x)
    train_x = np.array(xs)
    train_y = np.array([label(x) for x in train_x])
    params = train_mse(init_mlp(SURROGATE_ARCH, SURROGATE_ACTS, rng), train_x, train_y, rng, epochs=epochs)

    def evaluate(x) -> EvaluationResult:
        return EvaluationResult(float(predict_surrogate(params, design_vector(x))), True)

    return SurrogateFit(FidelityModel(model_id, evaluate, cfg.lf_cost), params, train_x, train_y)


def rmse(params: MlpParams, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.mean((predict_surrogate(params, x) - y) ** 2)))


def r_squared(params: MlpParams, x: np.ndarray, y: np.ndarray) -> float:
    resid = np.sum((predict_surrogate(params, x) - y) ** 2)
    total = np.sum((y - y.mean()) ** 2)
    return float(1.0 - resid / total) if total > 0 else float("nan")
