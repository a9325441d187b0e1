"""
Model-selection controller

Computes the desired object motion from the task error and the stretching
constraint, asks a deformation model for the robot command that best achieves
it, blends in obstacle avoidance, and feeds the resulting task improvement
back to the arm selector.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from ..errors import ConfigError, DimensionError, InputError, ModelBanditError
from ..geometry import command_metric, rigid_point_jacobian
from ..interfaces import ArmSelector, DeformationModel, World
from ..models import (
    DesiredMotion,
    GeodesicDistanceMatrix,
    GripperPose,
    GripperTwist,
    Obstacle,
    ObjectState,
    PlaneObstacle,
    RewardObservation,
    RobotCommand,
    SensedState,
    SphereObstacle,
    StepRecord,
    TargetSet,
)
from .bandits import command_similarity_matrix, compute_reward, vector_similarity_matrix

logger = logging.getLogger(__name__)

PENETRATION_DISTANCE = 1e-6


@dataclass(frozen=True)
class ControllerConfig:
    """Task-level controller parameters"""
    c: float = 0.0025
    beta: float = 1000.0
    lam: float = 0.03
    v_max_e: float = 0.2
    v_max_o: float = 0.2
    gripper_radius: float = 0.01
    command_norm_uses_c: bool = False
    similarity_uses_c: bool = True

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.lam < 0:
            raise ConfigError(f"stretching threshold must be non-negative, got {self.lam}")
        if not (self.v_max_e > 0 and self.v_max_o > 0):
            raise ConfigError("maximum velocities must be positive")
        if self.c < 0:
            raise ConfigError(f"rotational scale c must be non-negative, got {self.c}")
        if self.gripper_radius < 0:
            raise ConfigError("gripper radius must be non-negative")
        if self.command_norm_uses_c and self.c == 0:
            raise ConfigError("command_norm_uses_c needs c > 0")


# ---------------------------------------------------------------------------
# Desired object motion
# ---------------------------------------------------------------------------

def alignment_error(points: ObjectState, targets: TargetSet) -> float:
    """Sum over targets of the distance to the closest object point"""
    distances = np.linalg.norm(targets.targets[:, None, :] - points.points[None, :, :], axis=2)
    return float(np.sum(np.min(distances, axis=1)))


def error_correction(points: ObjectState, targets: TargetSet) -> DesiredMotion:
    """Pull each target's nearest object point toward it"""
    P = points.point_count
    offsets = targets.targets[:, None, :] - points.points[None, :, :]
    distances = np.linalg.norm(offsets, axis=2)
    nearest = np.argmin(distances, axis=1)
    rows = np.arange(targets.targets.shape[0])

    delta = np.zeros((P, 3))
    weights = np.zeros(P)
    np.add.at(delta, nearest, offsets[rows, nearest])
    np.maximum.at(weights, nearest, distances[rows, nearest])
    return DesiredMotion(delta.reshape(-1), weights)


def stretching_correction(D: GeodesicDistanceMatrix, lam: float, points: ObjectState) -> DesiredMotion:
    """Pairwise restoring motion for every pair stretched more than lam beyond its relaxed distance"""
    if lam < 0:
        raise InputError(f"stretching threshold must be non-negative, got {lam}")
    P = points.point_count
    if D.point_count != P:
        raise DimensionError(f"distance matrix covers {D.point_count} points, object has {P}")

    separation = points.points[None, :, :] - points.points[:, None, :]
    stretch = np.linalg.norm(separation, axis=2) - D.D
    i, j = np.nonzero(np.triu(stretch > lam, k=1))

    delta = np.zeros((P, 3))
    weights = np.zeros(P)
    if i.size:
        amount = stretch[i, j]
        pull = 0.5 * amount[:, None] * separation[i, j]
        np.add.at(delta, i, pull)
        np.add.at(delta, j, -pull)
        np.maximum.at(weights, i, amount)
        np.maximum.at(weights, j, amount)
    return DesiredMotion(delta.reshape(-1), weights)


def combine_terms(e: DesiredMotion, s: DesiredMotion) -> DesiredMotion:
    """Stretching motion plus the part of the error motion orthogonal to it"""
    if e.point_count != s.point_count:
        raise DimensionError(f"cannot combine motions over {e.point_count} and {s.point_count} points")
    error = e.per_point()
    stretching = s.per_point()
    norm_sq = np.sum(stretching * stretching, axis=1)
    along = np.sum(error * stretching, axis=1)
    scale = np.divide(along, norm_sq, out=np.zeros_like(along), where=norm_sq > 0)
    combined = stretching + error - scale[:, None] * stretching
    return DesiredMotion(combined.reshape(-1), e.weights + s.weights)


def desired_motion(points: ObjectState, targets: TargetSet, D: GeodesicDistanceMatrix,
                   lam: float) -> DesiredMotion:
    return combine_terms(error_correction(points, targets), stretching_correction(D, lam, points))


# ---------------------------------------------------------------------------
# Obstacle avoidance
# ---------------------------------------------------------------------------

class Proximity(NamedTuple):
    """Closest gripper-obstacle pair: the gripper point's Jacobian, the unit escape direction and the gap"""
    jacobian: np.ndarray
    direction: np.ndarray
    distance: float


def _closest_to_sphere(centre: np.ndarray, radius: float, obstacle: SphereObstacle):
    offset = centre - obstacle.center
    norm = float(np.linalg.norm(offset))
    direction = offset / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
    return norm - obstacle.radius - radius, direction


def _closest_to_plane(centre: np.ndarray, radius: float, obstacle: PlaneObstacle):
    height = float((centre - obstacle.point) @ obstacle.normal)
    return height - radius, obstacle.normal


def proximity(gripper: GripperPose, radius: float, obstacles: Sequence[Obstacle]) -> Proximity:
    """Minimum-distance pair between a spherical gripper and the obstacles"""
    if not obstacles:
        raise InputError("proximity needs at least one obstacle")
    best_distance, best_direction = math.inf, np.zeros(3)
    for obstacle in obstacles:
        if isinstance(obstacle, SphereObstacle):
            distance, direction = _closest_to_sphere(gripper.translation, radius, obstacle)
        elif isinstance(obstacle, PlaneObstacle):
            distance, direction = _closest_to_plane(gripper.translation, radius, obstacle)
        else:
            raise InputError(f"unsupported obstacle type {type(obstacle).__name__}")
        if distance < best_distance:
            best_distance, best_direction = distance, direction

    gripper_point = gripper.translation - radius * best_direction
    if best_distance <= 0:
        logger.warning(f"Gripper at {gripper.translation} penetrates an obstacle by {-best_distance:.3g}")
        best_distance = PENETRATION_DISTANCE
    return Proximity(rigid_point_jacobian(gripper, gripper_point), np.array(best_direction, dtype=float),
                     float(best_distance))


def nullspace_projector(J: np.ndarray) -> np.ndarray:
    return np.eye(J.shape[1]) - np.linalg.pinv(J) @ J


def repel_twist(qdot: np.ndarray, prox: Proximity, beta: float, v_max_o: float) -> np.ndarray:
    """Blend one gripper's 6-vector between avoidance and task motion with gamma = exp(-beta d)"""
    gamma = math.exp(-beta * prox.distance)
    J_pinv = np.linalg.pinv(prox.jacobian)
    avoidance = J_pinv @ prox.direction
    norm = float(np.linalg.norm(avoidance))
    if norm > 0:
        avoidance *= v_max_o / norm
    projector = np.eye(qdot.size) - J_pinv @ prox.jacobian
    return gamma * (avoidance + projector @ qdot) + (1.0 - gamma) * qdot


def obstacle_repulsion(qdot_desired: RobotCommand, obstacles: Sequence[Obstacle],
                       grippers: Sequence[GripperPose], beta: float, v_max_o: float,
                       gripper_radius: float = 0.0) -> RobotCommand:
    if beta <= 0:
        raise InputError(f"beta must be positive, got {beta}")
    if len(grippers) != qdot_desired.gripper_count:
        raise DimensionError(f"{len(grippers)} gripper poses for a {qdot_desired.gripper_count}-gripper command")
    if not obstacles:
        return qdot_desired
    twists = []
    for pose, twist in zip(grippers, qdot_desired.twists):
        prox = proximity(pose, gripper_radius, obstacles)
        twists.append(GripperTwist.from_vector(repel_twist(twist.as_vector(), prox, beta, v_max_o)))
    return RobotCommand(tuple(twists))


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------

def model_command(model: DeformationModel, desired: DesiredMotion, state: SensedState,
                  config: ControllerConfig) -> RobotCommand:
    """Robot command proposed by one model before obstacle avoidance"""
    metric = command_metric(state.gripper_count, config.c) if config.command_norm_uses_c else None
    qdot = model.command(desired.delta, desired.weights, config.v_max_e, state, metric)
    return RobotCommand.from_vector(qdot)


def executed_command(proposed: RobotCommand, world: World, state: SensedState,
                     config: ControllerConfig) -> RobotCommand:
    return obstacle_repulsion(proposed, world.obstacles, state.grippers, config.beta,
                              config.v_max_o, world.gripper_radius)


def preview_rewards(world: World, models: Sequence[DeformationModel],
                    config: ControllerConfig) -> np.ndarray:
    """Reward every model's command would earn this step, leaving the world untouched"""
    state = world.sense()
    desired = desired_motion(state.points, world.targets(), world.relaxed_distances, config.lam)
    before = world.error()
    rewards = np.empty(len(models))
    for index, model in enumerate(models):
        command = executed_command(model_command(model, desired, state, config), world, state, config)
        rewards[index] = compute_reward(before, world.preview_error(command))
    return rewards


def _similarity(commands: List[RobotCommand], config: ControllerConfig) -> np.ndarray:
    if config.similarity_uses_c:
        return command_similarity_matrix(commands, config.c)
    return vector_similarity_matrix(np.vstack([cmd.as_vector() for cmd in commands]))


def main_loop_step(world: World, models: Sequence[DeformationModel], bandit: ArmSelector,
                   config: ControllerConfig, run: int = 0, step: int = 0,
                   previous_regret: float = 0.0,
                   previewed_rewards: Optional[np.ndarray] = None) -> StepRecord:
    """One sense-select-command-learn iteration

    ``previewed_rewards`` holds every arm's reward for this step when the
    caller evaluated them; it supplies the best-arm reward for regret and the
    input of preview-based selectors. Errors raised by any stage end the step
    with an aborted record instead of propagating.
    """
    algorithm = bandit.algorithm.value
    try:
        state = world.sense()
        targets = world.targets()
        error_before = world.error()
        desired = desired_motion(state.points, targets, world.relaxed_distances, config.lam)

        arm = bandit.select(previewed_rewards)
        if bandit.needs_similarity:
            proposals = [model_command(model, desired, state, config) for model in models]
            proposed = proposals[arm]
        else:
            proposals = []
            proposed = model_command(models[arm], desired, state, config)

        command = executed_command(proposed, world, state, config)
        _, observed = world.step(command)
        error_after = world.error()
        reward = compute_reward(error_before, error_after)

        similarity = _similarity(proposals, config) if bandit.needs_similarity else None
        bandit.update(RewardObservation(arm, reward), similarity)

        qdot = command.as_vector()
        for model in models:
            model.observe(qdot, observed)
    except ModelBanditError as exc:
        logger.error(f"Run {run} {algorithm} step {step} aborted: {exc}")
        nan = float("nan")
        return StepRecord(run, algorithm, step, -1, nan, nan, nan, bandit.eta, previous_regret,
                          status=f"aborted: {exc}")

    if previewed_rewards is not None:
        best_reward = max(float(np.max(previewed_rewards)), reward)
    else:
        best_reward = float("nan")
    regret = previous_regret + (best_reward - reward if previewed_rewards is not None else 0.0)
    logger.debug(f"Run {run} {algorithm} step {step}: arm={arm} reward={reward:.4g} error={error_after:.4g}")
    return StepRecord(run, algorithm, step, arm, reward, best_reward, error_after, bandit.eta, regret)
