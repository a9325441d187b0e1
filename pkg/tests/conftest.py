"""
Shared fixtures
"""

import logging

import numpy as np
import pytest

from modelbandit.experiments.toy_world import ToyWorld, make_toy_world
from modelbandit.models import WeightedLeastSquaresProblem
from modelbandit.services.controller import ControllerConfig
from modelbandit.services.deformation import ModelSetConfig, model_set_factory


@pytest.fixture(autouse=True)
def restore_root_logging():
    """The CLI replaces the root handlers; put the originals back after every test"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.Philox(1234))


@pytest.fixture
def random_problem(rng):
    def build(rows: int = 12, cols: int = 4, max_norm: float = 0.5) -> WeightedLeastSquaresProblem:
        return WeightedLeastSquaresProblem(rng.normal(size=(rows, cols)), rng.normal(size=rows),
                                           rng.uniform(0.1, 2.0, rows), max_norm, block_size=1)
    return build


@pytest.fixture
def small_world() -> ToyWorld:
    return make_toy_world("line-to-arc", point_count=6)


@pytest.fixture
def small_model_set():
    """Two rigidity models and one adaptive model"""
    config = ModelSetConfig(k_trans_grid=[4.0], k_rot_grid=[4.0, 8.0], learning_rates=[0.1])

    def build(world: ToyWorld):
        return model_set_factory(config, world.relaxed_distances, world.grasped, world.sense())
    return build


@pytest.fixture
def controller_config() -> ControllerConfig:
    return ControllerConfig(beta=200.0, lam=0.005)
