"""Synthetic regret benchmarks and the toy manipulation world"""

from .synthetic import PRESETS, run_benchmark
from .toy_world import SCENARIOS, ToyWorld, make_toy_world, run_task

__all__ = ["PRESETS", "run_benchmark", "SCENARIOS", "ToyWorld", "make_toy_world", "run_task"]
