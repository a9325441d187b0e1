"""
Unit tests for the desired-motion terms, obstacle avoidance and one controller iteration
"""

import math

import numpy as np
import pytest

from modelbandit import solver
from modelbandit.errors import ConfigError, DimensionError, InputError, WorldStepError
from modelbandit.experiments.toy_world import make_toy_world
from modelbandit.models import (
    Algorithm,
    DiminishingRigidityParams,
    DesiredMotion,
    GeodesicDistanceMatrix,
    GripperPose,
    ObjectState,
    PlaneObstacle,
    RobotCommand,
    SphereObstacle,
    TargetSet,
)
from modelbandit.services.bandits import FixedArmBandit, make_selector
from modelbandit.services.controller import (
    PENETRATION_DISTANCE,
    ControllerConfig,
    alignment_error,
    combine_terms,
    desired_motion,
    error_correction,
    main_loop_step,
    nullspace_projector,
    obstacle_repulsion,
    preview_rewards,
    proximity,
    stretching_correction,
)
from modelbandit.services.deformation import ConstantJacobianModel


def _traced_errors(points, targets, J_model, J_true, steps, v_max, dt):
    """Straight-line main loop for one constant model, without obstacles or stretching"""
    identity = np.eye(J_model.shape[1])
    errors = []
    for _ in range(steps):
        offsets = targets[:, None, :] - points[None, :, :]
        distances = np.linalg.norm(offsets, axis=2)
        delta = np.zeros_like(points)
        weights = np.zeros(len(points))
        for t in range(len(targets)):
            p = int(np.argmin(distances[t]))
            delta[p] += offsets[t, p]
            weights[p] = max(weights[p], distances[t, p])

        row_weights = np.repeat(weights, 3)
        H = J_model.T @ (row_weights[:, None] * J_model)
        g = J_model.T @ (row_weights * delta.reshape(-1))
        qdot = np.linalg.lstsq(H, g, rcond=None)[0]
        if np.linalg.norm(qdot) > v_max:
            lo, hi = 0.0, float(np.linalg.norm(g)) / v_max
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if np.linalg.norm(np.linalg.solve(H + mid * identity, g)) > v_max:
                    lo = mid
                else:
                    hi = mid
            qdot = np.linalg.solve(H + hi * identity, g)

        points = points + (J_true @ qdot).reshape(-1, 3) * dt
        remaining = np.linalg.norm(targets[:, None, :] - points[None, :, :], axis=2)
        errors.append(float(np.sum(np.min(remaining, axis=1))))
    return errors


@pytest.mark.unit
class TestDesiredMotion:
    def test_alignment_error_sums_nearest_distances(self):
        points = ObjectState([[0, 0, 0], [1, 0, 0]])
        assert alignment_error(points, TargetSet([[0, 0, 1]])) == pytest.approx(1.0)
        assert alignment_error(points, TargetSet([[0, 0, 1], [1, 0, 2]])) == pytest.approx(3.0)

    def test_error_correction_accumulates_on_nearest_point(self):
        points = ObjectState([[0, 0, 0], [5, 0, 0]])
        motion = error_correction(points, TargetSet([[0, 0, 1], [0, 2, 0]]))
        assert np.allclose(motion.per_point(), [[0, 2, 1], [0, 0, 0]])
        assert np.allclose(motion.weights, [2.0, 0.0])

    def test_stretched_pair_is_pulled_together(self):
        points = ObjectState([[0, 0, 0], [2, 0, 0]])
        D = GeodesicDistanceMatrix([[0.0, 1.0], [1.0, 0.0]])
        motion = stretching_correction(D, 0.5, points)
        assert np.allclose(motion.per_point(), [[1, 0, 0], [-1, 0, 0]])
        assert np.allclose(motion.weights, [1.0, 1.0])

    def test_within_threshold_no_motion(self):
        points = ObjectState([[0, 0, 0], [2, 0, 0]])
        D = GeodesicDistanceMatrix([[0.0, 1.0], [1.0, 0.0]])
        motion = stretching_correction(D, 1.5, points)
        assert not np.any(motion.delta)
        assert not np.any(motion.weights)

    def test_stretching_forces_cancel(self, rng):
        points = ObjectState(rng.normal(size=(8, 3)))
        relaxed = np.abs(rng.normal(size=(8, 8))) * 0.3
        relaxed = 0.5 * (relaxed + relaxed.T)
        np.fill_diagonal(relaxed, 0.0)
        motion = stretching_correction(GeodesicDistanceMatrix(relaxed), 0.05, points)
        assert np.max(np.abs(motion.per_point().sum(axis=0))) < 1e-12

    def test_stretching_input_checks(self):
        points = ObjectState(np.zeros((2, 3)))
        with pytest.raises(InputError):
            stretching_correction(GeodesicDistanceMatrix(np.zeros((2, 2))), -0.1, points)
        with pytest.raises(DimensionError):
            stretching_correction(GeodesicDistanceMatrix(np.zeros((3, 3))), 0.1, points)

    def test_combine_keeps_stretching_and_orthogonal_error(self):
        e = DesiredMotion([1.0, 1.0, 0.0], [1.0])
        s = DesiredMotion([2.0, 0.0, 0.0], [0.5])
        combined = combine_terms(e, s)
        assert np.allclose(combined.delta, [2.0, 1.0, 0.0])
        assert combined.weights[0] == pytest.approx(1.5)

    def test_combine_without_stretching_is_error(self, rng):
        e = DesiredMotion(rng.normal(size=9), rng.uniform(size=3))
        combined = combine_terms(e, DesiredMotion.zeros(3))
        assert np.allclose(combined.delta, e.delta)

    def test_combine_point_counts(self):
        with pytest.raises(DimensionError):
            combine_terms(DesiredMotion.zeros(2), DesiredMotion.zeros(3))

    def test_desired_motion_on_relaxed_object_is_error_term(self):
        points = ObjectState([[0, 0, 0], [1, 0, 0]])
        D = GeodesicDistanceMatrix([[0.0, 1.0], [1.0, 0.0]])
        targets = TargetSet([[0, 0, 1]])
        assert np.allclose(desired_motion(points, targets, D, 0.03).delta,
                           error_correction(points, targets).delta)


@pytest.mark.unit
class TestObstacleAvoidance:
    def test_sphere_proximity(self):
        sphere = SphereObstacle(np.zeros(3), 0.5)
        prox = proximity(GripperPose.at([0, 0, 1]), 0.0, [sphere])
        assert prox.distance == pytest.approx(0.5)
        assert np.allclose(prox.direction, [0, 0, 1])
        assert proximity(GripperPose.at([0, 0, 1]), 0.1, [sphere]).distance == pytest.approx(0.4)

    def test_nearest_obstacle_wins(self):
        plane = PlaneObstacle(np.zeros(3), [0.0, 0.0, 1.0])
        sphere = SphereObstacle([5.0, 0.0, 0.3], 0.1)
        prox = proximity(GripperPose.at([0, 0, 0.3]), 0.0, [sphere, plane])
        assert prox.distance == pytest.approx(0.3)
        assert np.allclose(prox.direction, [0, 0, 1])

    def test_penetration_is_clamped(self):
        plane = PlaneObstacle(np.zeros(3), [0.0, 0.0, 1.0])
        assert proximity(GripperPose.at([0, 0, -0.2]), 0.0, [plane]).distance == PENETRATION_DISTANCE

    def test_proximity_needs_obstacles(self):
        with pytest.raises(InputError):
            proximity(GripperPose.at(np.zeros(3)), 0.0, [])

    def test_nullspace_projector(self, rng):
        J = rng.normal(size=(3, 6))
        N = nullspace_projector(J)
        assert np.allclose(N @ N, N)
        assert np.allclose(J @ N, 0.0, atol=1e-12)

    def test_no_obstacles_returns_command(self):
        command = RobotCommand.from_vector(np.arange(6, dtype=float))
        assert obstacle_repulsion(command, [], [GripperPose.at(np.zeros(3))], 1000.0, 0.2) is command

    def test_far_field_identity(self, rng):
        command = RobotCommand.from_vector(rng.normal(size=6))
        out = obstacle_repulsion(command, [SphereObstacle(np.zeros(3), 0.1)],
                                 [GripperPose.at([0.0, 0.0, 1.0])], 1000.0, 0.2)
        assert np.allclose(out.as_vector(), command.as_vector(), atol=1e-9)

    def test_contact_pushes_away(self):
        command = RobotCommand.from_vector([0.0, 0.0, -1.0, 0.0, 0.0, 0.0])
        sphere = SphereObstacle(np.zeros(3), 0.5)
        out = obstacle_repulsion(command, [sphere], [GripperPose.at([0.0, 0.0, 0.5 + 1e-7])], 1000.0, 0.2)
        gamma = math.exp(-1000.0 * 1e-7)
        assert out.twists[0].v[2] == pytest.approx(gamma * 0.2 - (1.0 - gamma), rel=1e-6)
        assert out.twists[0].v[2] > 0

    def test_input_checks(self):
        command = RobotCommand.zero(2)
        obstacles = [SphereObstacle(np.zeros(3), 0.1)]
        with pytest.raises(DimensionError):
            obstacle_repulsion(command, obstacles, [GripperPose.at(np.ones(3))], 1000.0, 0.2)
        with pytest.raises(InputError):
            obstacle_repulsion(command, obstacles, [GripperPose.at(np.ones(3))] * 2, 0.0, 0.2)


@pytest.mark.unit
class TestControllerConfig:
    def test_defaults(self):
        config = ControllerConfig()
        assert (config.c, config.beta, config.lam, config.v_max_e) == (0.0025, 1000.0, 0.03, 0.2)

    @pytest.mark.parametrize("kwargs", [dict(beta=0.0), dict(lam=-1.0), dict(v_max_e=0.0),
                                        dict(c=0.0, command_norm_uses_c=True)])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ControllerConfig(**kwargs)


@pytest.mark.unit
class TestMainLoopStep:
    def test_ucb1_solves_once(self, small_world, small_model_set, controller_config, mocker):
        models = small_model_set(small_world)
        spy = mocker.spy(solver, "solve_ball_constrained_wls")
        record = main_loop_step(small_world, models, make_selector(Algorithm.UCB1_NORMAL, len(models)),
                                controller_config)
        assert record.status == "ok"
        assert spy.call_count == 1

    def test_kfmandb_solves_every_model(self, small_world, small_model_set, controller_config, mocker, rng):
        models = small_model_set(small_world)
        spy = mocker.spy(solver, "solve_ball_constrained_wls")
        bandit = make_selector(Algorithm.KF_MANDB, len(models), rng=rng)
        record = main_loop_step(small_world, models, bandit, controller_config)
        assert record.status == "ok"
        assert spy.call_count == len(models) == 3

    def test_reward_matches_preview(self, small_world, small_model_set, controller_config):
        models = small_model_set(small_world)
        before = small_world.error()
        previewed = preview_rewards(small_world, models, controller_config)
        assert small_world.error() == before
        record = main_loop_step(small_world, models, make_selector(Algorithm.UCB1_NORMAL, len(models)),
                                controller_config, previewed_rewards=previewed)
        assert record.arm == 0
        assert record.reward == pytest.approx(previewed[0], abs=1e-12)
        assert record.best_reward == pytest.approx(previewed.max())
        assert record.cum_regret >= 0.0
        assert record.error == pytest.approx(small_world.error())

    def test_without_preview_regret_is_not_tracked(self, small_world, small_model_set, controller_config):
        models = small_model_set(small_world)
        record = main_loop_step(small_world, models, make_selector(Algorithm.UCB1_NORMAL, len(models)),
                                controller_config, previous_regret=0.5)
        assert math.isnan(record.best_reward)
        assert record.cum_regret == 0.5

    def test_world_failure_aborts_step(self, small_world, small_model_set, controller_config, mocker):
        models = small_model_set(small_world)
        mocker.patch.object(small_world, "step", side_effect=WorldStepError("gripper left the workspace"))
        record = main_loop_step(small_world, models, make_selector(Algorithm.UCB1_NORMAL, len(models)),
                                controller_config, run=3, step=7, previous_regret=1.25)
        assert record.status.startswith("aborted")
        assert "gripper left the workspace" in record.status
        assert (record.run, record.step, record.arm, record.cum_regret) == (3, 7, -1, 1.25)

    def test_ten_steps_match_traced_loop(self, rng):
        world = make_toy_world("line-to-arc", point_count=6)
        world.freeze()
        J_true = world.true_jacobian()
        J_model = J_true + rng.uniform(-0.05, 0.05, size=J_true.shape)
        models = [ConstantJacobianModel(J_model), ConstantJacobianModel(J_true)]
        # lam far above any reachable stretch keeps the desired motion equal to the error term
        config = ControllerConfig(beta=200.0, lam=1.0, v_max_e=0.01)
        expected = _traced_errors(world.sense().points.points, world.targets().targets, J_model, J_true,
                                  10, config.v_max_e, world.time_step)

        bandit = FixedArmBandit(len(models), arm=0)
        errors = []
        for step in range(10):
            record = main_loop_step(world, models, bandit, config, step=step)
            assert record.status == "ok"
            assert record.arm == 0
            errors.append(record.error)
        assert np.max(np.abs(np.array(errors) - expected)) < 1e-8

    def test_models_observe_executed_motion(self, small_model_set, controller_config):
        # the adaptive seed differs from this world's hidden rigidity, so the secant residual is non-zero
        world = make_toy_world("line-to-arc", point_count=6, true_params=DiminishingRigidityParams(5.0, 5.0))
        models = small_model_set(world)
        adaptive = models[-1]
        initial = adaptive.jacobian().copy()
        main_loop_step(world, models, make_selector(Algorithm.UCB1_NORMAL, len(models)), controller_config)
        assert not np.allclose(adaptive.jacobian(), initial)
