#!/usr/bin/env python3
"""
ASV benchmark suite for ModelBandit

Long-term performance tracking and regression detection using ASV.
These benchmarks track performance over time across different commits.
"""

import numpy as np

from modelbandit.experiments.streams import named_stream
from modelbandit.experiments.synthetic import PRESETS, make_synthetic_models, make_synthetic_system, run_synthetic_trial
from modelbandit.experiments.toy_world import default_model_set, make_toy_world
from modelbandit.models import Algorithm, KFMANDBState, RewardObservation, WeightedLeastSquaresProblem
from modelbandit.services import bandits
from modelbandit.services.bandits import make_selector
from modelbandit.services.controller import ControllerConfig, main_loop_step
from modelbandit.solver import solve_ball_constrained_wls


class SolverBenchmarks:
    """Ball-constrained least squares at the preset sizes"""

    params = [(3, 2), (147, 6), (6075, 12)]
    param_names = ["n_m"]

    def setup(self, n_m):
        n, m = n_m
        rng = np.random.Generator(np.random.Philox(0))
        self.problem = WeightedLeastSquaresProblem(rng.normal(size=(n, m)), rng.normal(size=n),
                                                   np.ones(n), 0.1, block_size=1)

    def time_solve(self, n_m):
        solve_ball_constrained_wls(self.problem)


class FilterBenchmarks:
    """Joint Kalman filter predict/correct"""

    params = [10, 60]
    param_names = ["arms"]

    def setup(self, arms):
        rng = np.random.Generator(np.random.Philox(0))
        self.state = KFMANDBState.initial(arms, 1.0, 1.0, xi=0.9)
        self.similarity = bandits.vector_similarity_matrix(rng.normal(size=(arms, 6)))

    def time_predict_correct(self, arms):
        bandits.kfmandb_correct(bandits.kfmandb_predict(self.state, self.similarity), RewardObservation(0, 0.5))

    def peakmem_predict_correct(self, arms):
        bandits.kfmandb_correct(bandits.kfmandb_predict(self.state, self.similarity), RewardObservation(0, 0.5))


class SyntheticTrialBenchmarks:
    """One synthetic trial per algorithm on the small preset"""

    params = ["ucb1-normal", "kf-manb", "kf-mandb"]
    param_names = ["algorithm"]

    def setup(self, algorithm):
        preset = PRESETS["small"]
        self.system = make_synthetic_system(preset.n, preset.m, named_stream(0, "system"))
        self.models = make_synthetic_models(self.system, preset.model_count, named_stream(0, "models"))

    def time_trial(self, algorithm):
        run_synthetic_trial(self.system, self.models, Algorithm(algorithm), 200, named_stream(1, algorithm))


class ToyWorldBenchmarks:
    """Controller iterations on the toy world"""

    def setup(self):
        self.world = make_toy_world("chain-spread")
        self.models = default_model_set(self.world)
        self.config = ControllerConfig()
        self.selector = make_selector(Algorithm.KF_MANDB, len(self.models), rng=named_stream(0, "kf-mandb"))

    def time_main_loop_step(self):
        main_loop_step(self.world, self.models, self.selector, self.config)

    def peakmem_main_loop_step(self):
        main_loop_step(self.world, self.models, self.selector, self.config)
