"""
Configuration management for ModelBandit

Run configuration is a flat key namespace mirroring the CLI flags. Values are
resolved in three layers: command-line flags override a JSON/YAML config file,
which overrides the parameter column of the chosen scenario.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import ConfigError
from .experiments.synthetic import PRESETS, resolve_preset
from .experiments.toy_world import SCENARIOS
from .models import BANDIT_ALGORITHMS, Algorithm, BenchmarkPreset
from .services.bandits import BanditParams
from .services.controller import ControllerConfig

logger = logging.getLogger(__name__)

SYNTHETIC_COLUMN = "synthetic"

# Controller and bandit parameters per task family
SCENARIO_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "synthetic": {
        "c": 0.0025, "beta": 1000.0, "lam": 0.03, "v_max_e": 0.1, "v_max_o": 0.2,
        "xi": 0.9, "sigma_tr_sq": 1.0, "sigma_obs_sq": 1.0,
    },
    "rope-winding": {
        "c": 0.0025, "beta": 200.0, "lam": 0.005, "v_max_e": 0.2, "v_max_o": 0.2,
        "xi": 0.9, "sigma_tr_sq": 0.1, "sigma_obs_sq": 0.01,
    },
    "table-coverage": {
        "c": 0.0025, "beta": 1000.0, "lam": 0.03, "v_max_e": 0.2, "v_max_o": 0.2,
        "xi": 0.9, "sigma_tr_sq": 0.1, "sigma_obs_sq": 0.01,
    },
    "two-stage-coverage": {
        "c": 0.0025, "beta": 1000.0, "lam": 0.03, "v_max_e": 0.2, "v_max_o": 0.2,
        "xi": 0.9, "sigma_tr_sq": 0.1, "sigma_obs_sq": 0.01,
    },
}

SCENARIO_COLUMNS = {
    "line-to-arc": "rope-winding",
    "chain-spread": "table-coverage",
    "chain-around-obstacle": "two-stage-coverage",
}

DEFAULT_SCENARIO = "chain-spread"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class RunConfig(BaseModel):
    """Fully resolved run configuration"""
    model_config = ConfigDict(extra="forbid")

    command: Literal["synth", "task", "selftest"]
    preset: Optional[str] = None
    model_count: Optional[int] = None
    n: Optional[int] = None
    m: Optional[int] = None
    algorithms: List[str] = [a.value for a in BANDIT_ALGORITHMS]
    runs: int = 100
    pulls: int = 1000
    seed: int = 0
    scenario: Optional[str] = None
    steps: int = 1000
    c: float = 0.0025
    beta: float = 1000.0
    lam: float = 0.03
    v_max_e: float = 0.2
    v_max_o: float = 0.2
    xi: float = 0.9
    sigma_tr_sq: float = 1.0
    sigma_obs_sq: float = 1.0
    command_norm_uses_c: bool = False
    similarity_uses_c: bool = True
    gripper_radius: float = 0.01
    time_step: float = 0.1
    jobs: int = 1
    output: Optional[str] = None
    log_level: str = "INFO"
    log_file: Optional[str] = None
    fixed_arm: int = 0
    evaluate_regret: bool = True

    @field_validator("algorithms")
    @classmethod
    def validate_algorithms(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one algorithm is required")
        return [Algorithm.parse(name).value for name in v]

    @field_validator("preset")
    @classmethod
    def validate_preset(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in PRESETS:
            raise ValueError(f"unknown preset '{v}' (choose from {', '.join(PRESETS)})")
        return v

    @field_validator("scenario")
    @classmethod
    def validate_scenario(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in SCENARIOS:
            raise ValueError(f"unknown scenario '{v}' (choose from {', '.join(SCENARIOS)})")
        return v

    @field_validator("model_count", "n", "m", "runs", "pulls", "steps", "jobs")
    @classmethod
    def validate_positive_int(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("must be a positive integer")
        return v

    @field_validator("seed", "fixed_arm")
    @classmethod
    def validate_non_negative_int(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("beta", "v_max_e", "v_max_o", "sigma_obs_sq", "time_step")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("c", "lam", "sigma_tr_sq", "gripper_radius")
    @classmethod
    def validate_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("xi")
    @classmethod
    def validate_xi(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("must lie in [0, 1]")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        if v.upper() not in LOG_LEVELS:
            raise ValueError(f"must be one of {', '.join(LOG_LEVELS)}")
        return v.upper()

    @model_validator(mode="after")
    def validate_combination(self) -> "RunConfig":
        if self.command_norm_uses_c and self.c == 0:
            raise ValueError("command_norm_uses_c needs c > 0")
        dims = (self.model_count, self.n, self.m)
        if any(d is not None for d in dims) and not all(d is not None for d in dims):
            raise ValueError("explicit dimensions need all of model_count, n and m")
        if self.m is not None and self.n is not None and self.m >= self.n:
            raise ValueError(f"m must be smaller than n (got m={self.m}, n={self.n})")
        return self

    # -- Views -----------------------------------------------------------------

    def algorithm_list(self) -> List[Algorithm]:
        return [Algorithm.parse(name) for name in self.algorithms]

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            c=self.c, beta=self.beta, lam=self.lam, v_max_e=self.v_max_e, v_max_o=self.v_max_o,
            gripper_radius=self.gripper_radius, command_norm_uses_c=self.command_norm_uses_c,
            similarity_uses_c=self.similarity_uses_c,
        )

    def bandit_params(self) -> BanditParams:
        return BanditParams(sigma_tr_sq=self.sigma_tr_sq, sigma_obs_sq=self.sigma_obs_sq,
                            xi=self.xi, fixed_arm=self.fixed_arm)

    def benchmark_preset(self) -> BenchmarkPreset:
        return resolve_preset(self.preset, self.model_count, self.n, self.m, self.v_max_e)

    def to_flat_dict(self) -> Dict[str, Any]:
        return self.model_dump()


def defaults_for(command: str, scenario: Optional[str] = None) -> Dict[str, Any]:
    """Default values for a command (and scenario, for task runs)"""
    if command == "task":
        scenario = scenario or DEFAULT_SCENARIO
        if scenario not in SCENARIO_COLUMNS:
            raise ConfigError(f"unknown scenario '{scenario}' (choose from {', '.join(SCENARIOS)})")
        values = dict(SCENARIO_DEFAULTS[SCENARIO_COLUMNS[scenario]])
        values.update(scenario=scenario, runs=1)
        return values
    return dict(SCENARIO_DEFAULTS[SYNTHETIC_COLUMN])


def load_config_file(config_path: str) -> Dict[str, Any]:
    """Read a flat JSON or YAML mapping"""
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"config file {config_path} not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            if path.suffix in (".yaml", ".yml"):
                values = yaml.safe_load(f)
            else:
                values = json.load(f)
    except (OSError, ValueError, yaml.YAMLError) as e:
        raise ConfigError(f"failed to read config from {config_path}: {e}") from e
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ConfigError(f"config file {config_path} must contain a mapping of keys to values")
    logger.info(f"Configuration loaded from {config_path}")
    return values


def resolve_config(cli_values: Dict[str, Any], file_values: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Layer CLI values over file values over scenario defaults"""
    file_values = dict(file_values or {})
    merged = {**file_values, **{k: v for k, v in cli_values.items() if v is not None}}
    command = merged.get("command")
    if command is None:
        raise ConfigError("no command given")
    resolved = {**defaults_for(command, merged.get("scenario")), **merged}
    return RunConfig(**resolved)


def save_config(config: RunConfig, config_path: str) -> None:
    """Write a configuration as JSON, or YAML for .yaml/.yml paths"""
    path = Path(config_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        if path.suffix in (".yaml", ".yml"):
            yaml.safe_dump(config.to_flat_dict(), f, default_flow_style=False, sort_keys=True)
        else:
            json.dump(config.to_flat_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    logger.info(f"Configuration saved to {config_path}")
