"""
Synthetic regret experiments

An underactuated linear system ydot = J xdot (m < n) is driven toward the
origin by commands from a set of noisy constant-Jacobian models. Every trial
evaluates all models each pull, so the best-arm reward and hence the regret
are exact.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, ModelBanditError
from ..models import (
    BANDIT_ALGORITHMS,
    Algorithm,
    BenchmarkPreset,
    RewardObservation,
    StepRecord,
    SummaryRow,
    TrialRecord,
)
from ..services.bandits import BanditParams, compute_reward, make_selector, vector_similarity_matrix
from ..services.deformation import ConstantJacobianModel, noisy_constant_models
from ..services.reporter import summarize
from .streams import environment_seed, named_stream, selection_seed

logger = logging.getLogger(__name__)

PRESETS: Dict[str, BenchmarkPreset] = {
    "small": BenchmarkPreset("small", model_count=10, n=3, m=2),
    "medium": BenchmarkPreset("medium", model_count=60, n=147, m=6),
    "large": BenchmarkPreset("large", model_count=60, n=6075, m=12),
}


@dataclass
class SyntheticSystem:
    """Linear system ydot = J_true xdot with state y"""
    J_true: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.J_true = np.asarray(self.J_true, dtype=float)
        self.y = np.array(self.y, dtype=float).reshape(-1)
        if self.J_true.shape[0] != self.y.size:
            raise ConfigError(f"J_true has {self.J_true.shape[0]} rows for a {self.y.size}-dimensional state")
        if self.m >= self.n:
            raise ConfigError(f"system must be underactuated (m < n), got m={self.m}, n={self.n}")

    @property
    def n(self) -> int:
        return int(self.J_true.shape[0])

    @property
    def m(self) -> int:
        return int(self.J_true.shape[1])

    def error(self) -> float:
        return float(np.linalg.norm(self.y))

    def copy(self) -> "SyntheticSystem":
        return SyntheticSystem(self.J_true, self.y.copy())


def make_synthetic_system(n: int, m: int, rng: np.random.Generator, noise: float = 0.1,
                          initial_value: float = 10.0) -> SyntheticSystem:
    """J_true = [I; 0] plus elementwise U(-noise, noise); y starts at initial_value everywhere"""
    if m >= n:
        raise ConfigError(f"system must be underactuated (m < n), got m={m}, n={n}")
    base = np.vstack([np.eye(m), np.zeros((n - m, m))])
    return SyntheticSystem(base + rng.uniform(-noise, noise, size=(n, m)), np.full(n, initial_value))


def make_synthetic_models(system: SyntheticSystem, model_count: int, rng: np.random.Generator,
                          noise: float = 0.025) -> List[ConstantJacobianModel]:
    if model_count < 1:
        raise ConfigError("model set must contain at least one model")
    return noisy_constant_models(system.J_true, model_count, noise, rng)


def run_synthetic_trial(system: SyntheticSystem, models: Sequence[ConstantJacobianModel],
                        algorithm: Algorithm, pulls: int, rng: np.random.Generator,
                        params: Optional[BanditParams] = None, v_max: float = 0.1,
                        run: int = 0) -> TrialRecord:
    """Drive a private copy of ``system`` for ``pulls`` steps with the selected models"""
    if pulls < 1:
        raise ConfigError("a trial needs at least one pull")
    system = system.copy()
    selector = make_selector(algorithm, len(models), params, rng)
    weights = np.ones(system.n)
    trial = TrialRecord(run, algorithm.value, system.error())
    regret = 0.0

    for step in range(pulls):
        try:
            before = system.error()
            commands = np.vstack([model.command(-system.y, weights, v_max) for model in models])
            outcomes = system.y[:, None] + system.J_true @ commands.T
            rewards = before - np.linalg.norm(outcomes, axis=0)

            arm = selector.select(rewards if selector.needs_preview else None)
            system.y = outcomes[:, arm].copy()
            reward = compute_reward(before, system.error())
            best = max(float(np.max(rewards)), reward)
            regret += best - reward

            similarity = vector_similarity_matrix(commands) if selector.needs_similarity else None
            selector.update(RewardObservation(arm, reward), similarity)
        except ModelBanditError as exc:
            logger.error(f"Run {run} {algorithm.value} pull {step} aborted: {exc}")
            trial.status = f"aborted: {exc}"
            break
        trial.steps.append(StepRecord(run, algorithm.value, step, arm, reward, best,
                                      system.error(), selector.eta, regret))
    return trial


@dataclass
class BenchmarkResult:
    trials: List[TrialRecord]
    summary: List[SummaryRow]
    seeds: Dict[str, List[int]]


def _run_index(preset: BenchmarkPreset, run: int, seed: int, algorithms: Sequence[Algorithm],
               params: BanditParams, pulls: int) -> List[TrialRecord]:
    env_seed = environment_seed(seed, run)
    system = make_synthetic_system(preset.n, preset.m, named_stream(env_seed, "system"), preset.system_noise)
    models = make_synthetic_models(system, preset.model_count, named_stream(env_seed, "models"),
                                   preset.model_noise)
    trials = []
    for algorithm in algorithms:
        rng = named_stream(selection_seed(seed, run), algorithm.value)
        trials.append(run_synthetic_trial(system, models, algorithm, pulls, rng, params,
                                          preset.v_max_e, run))
    return trials


def run_benchmark(preset: BenchmarkPreset, runs: Optional[int] = None, seed: int = 0,
                  algorithms: Sequence[Algorithm] = BANDIT_ALGORITHMS,
                  params: Optional[BanditParams] = None, pulls: Optional[int] = None,
                  jobs: int = 1) -> BenchmarkResult:
    """Independent runs of every algorithm; runs share environment streams across algorithms"""
    runs = preset.runs if runs is None else runs
    pulls = preset.pulls if pulls is None else pulls
    params = params or BanditParams()
    if runs < 1:
        raise ConfigError("benchmark needs at least one run")

    logger.info(f"Benchmark '{preset.name}': M={preset.model_count} n={preset.n} m={preset.m}, "
                f"{runs} runs x {pulls} pulls, jobs={jobs}")
    start = time.time()
    per_run: Dict[int, List[TrialRecord]] = {}
    if jobs <= 1:
        for run in range(runs):
            per_run[run] = _run_index(preset, run, seed, algorithms, params, pulls)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            futures = {
                executor.submit(_run_index, preset, run, seed, algorithms, params, pulls): run
                for run in range(runs)
            }
            for future in as_completed(futures):
                per_run[futures[future]] = future.result()

    trials = [trial for run in sorted(per_run) for trial in per_run[run]]
    summary = summarize(preset.name, trials, [a.value for a in algorithms])
    logger.info(f"Benchmark '{preset.name}' finished in {time.time() - start:.1f}s")
    seeds = {
        "environment": [environment_seed(seed, r) for r in range(runs)],
        "selection": [selection_seed(seed, r) for r in range(runs)],
    }
    return BenchmarkResult(trials, summary, seeds)


def resolve_preset(name: Optional[str], model_count: Optional[int] = None, n: Optional[int] = None,
                   m: Optional[int] = None, v_max_e: Optional[float] = None) -> BenchmarkPreset:
    """Named preset, or a custom one when all of model_count, n and m are given"""
    dimensions = (model_count, n, m)
    if any(d is not None for d in dimensions):
        if not all(d is not None for d in dimensions):
            raise ConfigError("explicit dimensions need all of model_count, n and m")
        base = replace(PRESETS["small"], name="custom", model_count=model_count, n=n, m=m)
    else:
        key = name or "small"
        if key not in PRESETS:
            raise ConfigError(f"unknown preset '{key}' (choose from {', '.join(PRESETS)})")
        base = PRESETS[key]
    return base if v_max_e is None else replace(base, v_max_e=v_max_e)
