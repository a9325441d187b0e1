"""
Unit tests for the data models
"""

import numpy as np
import pytest

from modelbandit.errors import DimensionError, InputError
from modelbandit.models import (
    Algorithm,
    AdaptiveJacobianState,
    BenchmarkPreset,
    DesiredMotion,
    KFMANDBState,
    ObjectState,
    PlaneObstacle,
    RobotCommand,
    StepRecord,
    TrialRecord,
    WeightedLeastSquaresProblem,
)


@pytest.mark.unit
class TestValueTypes:
    def test_algorithm_parse_is_case_insensitive(self):
        assert Algorithm.parse("KF-MANDB") is Algorithm.KF_MANDB
        with pytest.raises(ValueError, match="unknown algorithm"):
            Algorithm.parse("epsilon-greedy")

    def test_command_vector_layout(self):
        vector = np.arange(12, dtype=float)
        command = RobotCommand.from_vector(vector)
        assert command.gripper_count == 2
        assert np.array_equal(command.twists[1].omega, [9.0, 10.0, 11.0])
        assert np.array_equal(command.as_vector(), vector)

    def test_command_vector_length(self):
        with pytest.raises(DimensionError):
            RobotCommand.from_vector(np.zeros(7))

    def test_object_state_is_read_only(self):
        state = ObjectState(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            state.points[0, 0] = 1.0

    def test_object_state_rejects_nan(self):
        with pytest.raises(InputError):
            ObjectState([[0.0, np.nan, 0.0]])

    def test_desired_motion_shapes(self):
        with pytest.raises(DimensionError):
            DesiredMotion(np.zeros(5), np.zeros(2))
        with pytest.raises(InputError):
            DesiredMotion(np.zeros(3), [-1.0])

    def test_plane_normal_must_be_unit(self):
        with pytest.raises(InputError):
            PlaneObstacle(np.zeros(3), [0.0, 0.0, 2.0])

    def test_learning_rate_range(self):
        with pytest.raises(InputError):
            AdaptiveJacobianState(np.eye(3), 0.0)
        with pytest.raises(InputError):
            AdaptiveJacobianState(np.eye(3), 1.5)

    def test_kfmandb_prior(self):
        state = KFMANDBState.initial(3, 0.1, 0.01, xi=0.9, eta0=2.0)
        assert np.allclose(state.covariance, 4e6 * np.eye(3))
        assert np.array_equal(state.mean, np.zeros(3))


@pytest.mark.unit
class TestProblemValidation:
    def test_row_weights_repeat_per_block(self):
        problem = WeightedLeastSquaresProblem(np.zeros((6, 2)), np.zeros(6), [1.0, 2.0], 1.0)
        assert np.array_equal(problem.row_weights(), [1, 1, 1, 2, 2, 2])

    @pytest.mark.parametrize("kwargs,error", [
        (dict(J=np.zeros((6, 2)), target=np.zeros(5), weights=np.ones(2), max_norm=1.0), DimensionError),
        (dict(J=np.zeros((6, 2)), target=np.zeros(6), weights=np.ones(3), max_norm=1.0), DimensionError),
        (dict(J=np.zeros((6, 2)), target=np.zeros(6), weights=[1.0, -1.0], max_norm=1.0), InputError),
        (dict(J=np.zeros((6, 2)), target=np.zeros(6), weights=np.ones(2), max_norm=0.0), InputError),
        (dict(J=np.full((6, 2), np.inf), target=np.zeros(6), weights=np.ones(2), max_norm=1.0), InputError),
    ])
    def test_invalid_problems(self, kwargs, error):
        with pytest.raises(error):
            WeightedLeastSquaresProblem(**kwargs)


@pytest.mark.unit
class TestRecords:
    def test_empty_trial(self):
        trial = TrialRecord(0, "kf-manb", 3.5)
        assert trial.total_regret == 0.0
        assert trial.final_error == 3.5
        assert not trial.aborted

    def test_trial_reads_last_step(self):
        trial = TrialRecord(0, "kf-manb", 3.5)
        trial.steps.append(StepRecord(0, "kf-manb", 0, 1, 0.5, 0.7, 3.0, 0.95, 0.2))
        trial.steps.append(StepRecord(0, "kf-manb", 1, 0, 0.5, 0.5, 2.5, 0.9, 0.2))
        assert trial.total_regret == 0.2
        assert trial.final_error == 2.5
        assert trial.steps[0].to_row() == [0, "kf-manb", 0, 1, 0.5, 0.7, 3.0, 0.95, 0.2]

    def test_preset_needs_positive_sizes(self):
        with pytest.raises(InputError):
            BenchmarkPreset("broken", model_count=0, n=3, m=2)
