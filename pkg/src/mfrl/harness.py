"""Seeded experiment pipeline: train a method, evaluate its HF policy, write CSVs."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AdaptiveConfig, run_adaptive_training
from .baselines import run_hierarchical_training, run_single_fidelity_training, scaled_schedule
from .core import FidelityId, apply_action
from .env import DesignEnv, EnvConfig, hf_evaluate, sample_seed_design
from .metrics import RunMetrics
from .nn import params_from_bytes, params_to_bytes
from .policy import Agent, GaussianPolicy, PpoConfig, policy_mean

log = logging.getLogger(__name__)

METHODS = ("adaptive", "hierarchical_1", "hierarchical_2", "single_hf", "single_lf1", "single_lf2")
_EVAL_STREAM = 0xE7A1

USAGE_HEADER = ["episode", "lf1_steps", "lf2_steps", "hf_steps", "theta"]
QUALITY_HEADER = ["seed", "iteration", "q"]
COST_HEADER = ["episode", "lf1_evals", "lf2_evals", "hf_evals", "cumulative_cost_s"]
SUMMARY_HEADER = ["method", "runs", "mean_final_q", "std_final_q", "total_cost_s"]
SPREAD_HEADER = ["method", "run", "mean_final_q", "std_final_q_across_seeds"]


@dataclass
class ExperimentConfig:
    method: str = "adaptive"
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    episode_count: int = 300
    episode_length: int = 20
    epsilon: float = 0.1
    batch_size: int = 400
    theta_tail_mode: str = "strict"
    lf_logprob_source: str = "hf_assembly"
    clip_ratio: float = 0.2
    # PPO settings tuned for 300-episode runs (about 15 updates per agent)
    gamma: float = 0.95
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch: int = 64
    value_coeff: float = 0.5
    entropy_coeff: float = 0.0
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = 0.0
    a_max: float = 0.1
    bias_magnitude: float = 0.6
    validity_threshold: float = 1.6
    invalid_penalty: float = 0.2
    hf_cost: float = 1.78
    lf_cost: float = 208e-6
    n_eval_seeds: int = 200
    output_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        self.seeds = [int(s) for s in self.seeds]
        self.hidden = tuple(int(h) for h in self.hidden)

    @classmethod
    def full_scale(cls, **kw) -> "ExperimentConfig":
        return cls(episode_count=1200, n_eval_seeds=1200, **kw)

    def adaptive_config(self) -> AdaptiveConfig:
        return AdaptiveConfig(
            episode_count=self.episode_count, episode_length=self.episode_length,
            epsilon=self.epsilon, batch_size=self.batch_size,
            theta_tail_mode=self.theta_tail_mode, a_max=self.a_max,
            lf_logprob_source=self.lf_logprob_source,
            hidden=self.hidden, init_log_std=self.init_log_std,
        )

    def ppo_config(self) -> PpoConfig:
        return PpoConfig(
            clip_ratio=self.clip_ratio, gamma=self.gamma, gae_lambda=self.gae_lambda,
            epochs=self.epochs, minibatch=self.minibatch, value_coeff=self.value_coeff,
            entropy_coeff=self.entropy_coeff, lr=self.learning_rate,
        )

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            bias_magnitude=self.bias_magnitude, validity_threshold=self.validity_threshold,
            invalid_penalty=self.invalid_penalty, hf_cost=self.hf_cost, lf_cost=self.lf_cost,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def hash(self) -> str:
        """Digest of everything that influences results (not seeds, method or paths)."""
        d = self.to_dict()
        for k in ("seeds", "output_dir", "workers", "method"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, (list, tuple)):
        return [int(p) for p in raw.replace(",", " ").split()]
    return raw


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse flat ``key = value`` lines (``#`` comments, blank lines ignored)."""
    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key == "hidden_sizes":
            key = "hidden"
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(raw, known[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, list):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def training_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def evaluation_seeds(seed: int, n: int) -> np.ndarray:
    """Seed designs shared by every method trained with the same run seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, _EVAL_STREAM]))
    return np.array([sample_seed_design(rng) for _ in range(n)]).reshape(n, 4)


def evaluate_policy(agent: Agent | GaussianPolicy, seeds, episode_length: int,
                    env_cfg: EnvConfig = EnvConfig()) -> np.ndarray:
    """Deterministic-mean rollouts; returns HF quality of shape ``(n_seeds, episode_length)``."""
    policy = agent.policy if isinstance(agent, Agent) else agent
    x = np.array(seeds, dtype=np.float64).reshape(-1, 4)
    out = np.empty((len(x), episode_length))
    for t in range(episode_length):
        a = policy.a_max * np.tanh(policy_mean(policy, x))
        x = apply_action(x, a)
        out[:, t] = [hf_evaluate(row, env_cfg).q for row in x]
    return out


def train_method(cfg: ExperimentConfig, method: str, seed: int):
    """Train one method for one seed; returns ``(agents, metrics)`` with HF agent under ``HF``."""
    env = DesignEnv(cfg.env_config())
    acfg, pcfg, rng = cfg.adaptive_config(), cfg.ppo_config(), training_rng(seed)
    if method == "adaptive":
        return run_adaptive_training(env, acfg, pcfg, rng)
    if method in ("hierarchical_1", "hierarchical_2"):
        order = (FidelityId.LF1, FidelityId.LF2) if method.endswith("1") else (FidelityId.LF2, FidelityId.LF1)
        return run_hierarchical_training(env, scaled_schedule(order, acfg.episode_length), acfg, pcfg, rng)
    model = {"single_hf": FidelityId.HF, "single_lf1": FidelityId.LF1, "single_lf2": FidelityId.LF2}[method]
    agent, metrics = run_single_fidelity_training(env, model, acfg, pcfg, rng)
    # the evaluated artifact is always stored under HF
    return {FidelityId.HF: agent, model: agent}, metrics


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def usage_rows(metrics: RunMetrics):
    for e, (c, th) in enumerate(zip(metrics.steps, metrics.theta)):
        yield (e, c[FidelityId.LF1], c[FidelityId.LF2], c[FidelityId.HF], th)


def cost_rows(metrics: RunMetrics):
    for e, (c, cost) in enumerate(zip(metrics.cumulative_evals, metrics.cumulative_cost)):
        yield (e, c[FidelityId.LF1], c[FidelityId.LF2], c[FidelityId.HF], cost)


def quality_rows(quality: np.ndarray):
    for i, row in enumerate(quality):
        for t, q in enumerate(row):
            yield (i, t, float(q))


def save_agent(agent: Agent, prefix: Path) -> None:
    prefix.with_name(prefix.name + "_policy.bin").write_bytes(params_to_bytes(agent.policy.mean_net))
    prefix.with_name(prefix.name + "_value.bin").write_bytes(params_to_bytes(agent.value.net))
    extra = {"log_std": agent.policy.log_std.tolist(), "a_max": agent.policy.a_max}
    prefix.with_name(prefix.name + "_policy.json").write_text(json.dumps(extra), encoding="utf-8")


def load_policy(prefix: Path) -> GaussianPolicy:
    net = params_from_bytes(prefix.with_name(prefix.name + "_policy.bin").read_bytes())
    extra = json.loads(prefix.with_name(prefix.name + "_policy.json").read_text(encoding="utf-8"))
    return GaussianPolicy(net, np.array(extra["log_std"]), float(extra["a_max"]))


def run_dir_for(cfg: ExperimentConfig, method: str, seed: int) -> Path:
    return Path(cfg.output_dir) / method / f"seed_{seed}"


def run_one(cfg: ExperimentConfig, method: str, seed: int) -> Path:
    """Train, evaluate and write one run directory."""
    out = run_dir_for(cfg, method, seed)
    out.mkdir(parents=True, exist_ok=True)
    agents, metrics = train_method(cfg, method, seed)
    metrics.quality = evaluate_policy(
        agents[FidelityId.HF], evaluation_seeds(seed, cfg.n_eval_seeds), cfg.episode_length, cfg.env_config()
    )
    _write_csv(out / "usage.csv", USAGE_HEADER, usage_rows(metrics))
    _write_csv(out / "cost.csv", COST_HEADER, cost_rows(metrics))
    _write_csv(out / "quality.csv", QUALITY_HEADER, quality_rows(metrics.quality))
    save_agent(agents[FidelityId.HF], out / "hf")
    (out / "config.txt").write_text(dump_config(dataclasses.replace(cfg, method=method)), encoding="utf-8")
    manifest = {
        "method": method, "seed": seed, "config_hash": cfg.hash(), "version": __version__,
        "episodes": metrics.n_episodes, "episode_length": cfg.episode_length,
        "n_eval_seeds": cfg.n_eval_seeds,
        "updates": {m.value: n for m, n in metrics.n_updates.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def evaluate_run(run_dir) -> np.ndarray:
    """Re-evaluate a stored HF policy and rewrite the run's quality.csv."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    cfg = load_config(run_dir / "config.txt")
    quality = evaluate_policy(
        load_policy(run_dir / "hf"), evaluation_seeds(manifest["seed"], cfg.n_eval_seeds),
        cfg.episode_length, cfg.env_config(),
    )
    _write_csv(run_dir / "quality.csv", QUALITY_HEADER, quality_rows(quality))
    return quality


def _run_job(args):
    cfg, method, seed = args
    try:
        return method, seed, str(run_one(cfg, method, seed)), None
    except Exception as exc:  # isolate per-seed failures
        log.exception("run %s seed %d failed", method, seed)
        return method, seed, None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg: ExperimentConfig, methods=None) -> dict:
    """Run ``methods`` (default: ``cfg.method``) for every seed; writes a top-level manifest."""
    methods = list(methods or [cfg.method])
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, m, s) for m in methods for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    manifest = {
        "config_hash": cfg.hash(), "version": __version__, "methods": methods, "seeds": cfg.seeds,
        "runs": [{"method": m, "seed": s, "dir": d, "error": err} for m, s, d, err in results],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_quality(run_dir: Path) -> np.ndarray:
    with open(run_dir / "quality.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    n_seeds = max(int(r["seed"]) for r in rows) + 1
    n_iter = max(int(r["iteration"]) for r in rows) + 1
    q = np.empty((n_seeds, n_iter))
    for r in rows:
        q[int(r["seed"]), int(r["iteration"])] = float(r["q"])
    return q


def read_final_cost(run_dir: Path) -> float:
    with open(run_dir / "cost.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return float(rows[-1]["cumulative_cost_s"]) if rows else 0.0


def summarize(run_dirs, out_csv, spread_csv=None) -> list[str]:
    """Pool final-iteration quality per method; returns the list of methods with gaps.

    Methods are taken from each run's manifest. A run missing any file is
    reported as a gap row (empty statistics) rather than silently skipped.
    """
    pooled: dict[str, list[float]] = {}
    costs: dict[str, float] = {}
    runs: dict[str, int] = {}
    spread: list[tuple] = []
    gaps: list[str] = []
    for d in sorted(Path(p) for p in run_dirs):
        try:
            manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
            method = manifest["method"]
        except (OSError, ValueError, KeyError):
            method = d.parent.name if d.parent.name in METHODS else d.name
            gaps.append(method)
            pooled.setdefault(method, [])
            continue
        try:
            final = read_quality(d)[:, -1]
            cost = read_final_cost(d)
        except (OSError, ValueError):
            gaps.append(method)
            pooled.setdefault(method, [])
            continue
        pooled.setdefault(method, []).extend(final.tolist())
        costs[method] = costs.get(method, 0.0) + cost
        runs[method] = runs.get(method, 0) + 1
        spread.append((method, manifest["seed"], float(np.mean(final)),
                       float(np.std(final, ddof=1)) if len(final) > 1 else 0.0))
    rows = []
    for method in sorted(pooled, key=lambda m: METHODS.index(m) if m in METHODS else len(METHODS)):
        vals = pooled[method]
        if method in gaps or not vals:
            rows.append((method, runs.get(method, 0), "", "", ""))
            continue
        std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        rows.append((method, runs[method], statistics.fmean(vals), std, costs[method]))
    _write_csv(Path(out_csv), SUMMARY_HEADER, rows)
    if spread_csv is not None:
        _write_csv(Path(spread_csv), SPREAD_HEADER, spread)
    return sorted(set(gaps))


def find_run_dirs(root) -> list[Path]:
    return sorted(p.parent for p in Path(root).rglob("manifest.json") if p.parent.name.startswith("seed_"))


def unit_costs(cfg: ExperimentConfig) -> dict[FidelityId, float]:
    return {FidelityId.HF: cfg.hf_cost, FidelityId.LF1: cfg.lf_cost, FidelityId.LF2: cfg.lf_cost}

