"""
Deterministic kinematic manipulation world

A chain of points is grasped at both ends by free-floating grippers. The
object moves according to a hidden diminishing-rigidity Jacobian that is
re-derived from the current state every step. No rigidity-grid model uses the
hidden parameters; the adaptive models start from them but are never
re-derived, so they drift from the truth as the object deforms.
"""

import copy
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, DimensionError, ModelBanditError, WorldStepError
from ..geometry import integrate_pose
from ..interfaces import DeformationModel
from ..models import (
    BANDIT_ALGORITHMS,
    Algorithm,
    DiminishingRigidityParams,
    GeodesicDistanceMatrix,
    GripperPose,
    Obstacle,
    ObjectState,
    PlaneObstacle,
    RobotCommand,
    SensedState,
    SphereObstacle,
    SummaryRow,
    TargetSet,
    TrialRecord,
)
from ..services.bandits import BanditParams, make_selector
from ..services.controller import (
    ControllerConfig,
    alignment_error,
    main_loop_step,
    preview_rewards,
)
from ..services.deformation import (
    JacobianModel,
    ModelSetConfig,
    chain_edges,
    diminishing_rigidity_jacobian,
    geodesic_distance_matrix,
    model_set_factory,
)
from ..services.reporter import summarize
from .streams import named_stream, selection_seed

logger = logging.getLogger(__name__)

SCENARIOS = ("line-to-arc", "chain-spread", "chain-around-obstacle")
HIDDEN_RIGIDITY = DiminishingRigidityParams(10.0, 10.0)


class ToyWorld:
    """Chain object, grippers, static targets and obstacles"""

    def __init__(self, name: str, relaxed_points: np.ndarray, edges: Sequence[Tuple[int, int, float]],
                 grasped: Sequence[Sequence[int]], grippers: Sequence[GripperPose],
                 targets: TargetSet, obstacles: Sequence[Obstacle] = (),
                 initial_points: Optional[np.ndarray] = None,
                 true_params: DiminishingRigidityParams = HIDDEN_RIGIDITY,
                 time_step: float = 0.1, gripper_radius: float = 0.01):
        if len(grasped) != len(grippers):
            raise ConfigError(f"{len(grippers)} grippers but {len(grasped)} grasp sets")
        if not time_step > 0:
            raise ConfigError(f"time step must be positive, got {time_step}")
        self.name = name
        self._relaxed_points = np.array(relaxed_points, dtype=float).reshape(-1, 3)
        self._distances = geodesic_distance_matrix(self._relaxed_points, edges)
        self._grasped = [list(g) for g in grasped]
        self._grippers = tuple(grippers)
        self._targets = targets
        self._obstacles = tuple(obstacles)
        self._points = (self._relaxed_points if initial_points is None
                        else np.array(initial_points, dtype=float).reshape(-1, 3)).copy()
        if self._points.shape != self._relaxed_points.shape:
            raise DimensionError("initial and relaxed configurations differ in size")
        self.true_params = true_params
        self.time_step = time_step
        self.gripper_radius = gripper_radius
        self._frozen_jacobian: Optional[np.ndarray] = None
        self.min_clearance = self.clearance()

    # -- World interface -----------------------------------------------------

    @property
    def obstacles(self) -> Sequence[Obstacle]:
        return self._obstacles

    @property
    def grasped(self) -> Sequence[Sequence[int]]:
        return self._grasped

    @property
    def relaxed_distances(self) -> GeodesicDistanceMatrix:
        return self._distances

    def sense(self) -> SensedState:
        return SensedState(ObjectState(self._points), self._grippers)

    def targets(self) -> TargetSet:
        return self._targets

    def error(self) -> float:
        return alignment_error(ObjectState(self._points), self._targets)

    def step(self, command: RobotCommand) -> Tuple[SensedState, np.ndarray]:
        if command.gripper_count != len(self._grippers):
            raise WorldStepError(f"command drives {command.gripper_count} grippers, world has {len(self._grippers)}")
        qdot = command.as_vector()
        if not np.all(np.isfinite(qdot)):
            raise WorldStepError("command is not finite")
        velocity = self.true_jacobian() @ qdot
        self._points = self._points + velocity.reshape(-1, 3) * self.time_step
        self._grippers = tuple(
            integrate_pose(pose, twist, self.time_step) for pose, twist in zip(self._grippers, command.twists)
        )
        self.min_clearance = min(self.min_clearance, self.clearance())
        return self.sense(), velocity

    def preview_error(self, command: RobotCommand) -> float:
        trial = self.copy()
        trial.step(command)
        return trial.error()

    # -- Ground truth and diagnostics ------------------------------------------

    def true_jacobian(self) -> np.ndarray:
        if self._frozen_jacobian is not None:
            return self._frozen_jacobian
        return diminishing_rigidity_jacobian(self.true_params, self._distances, self._grippers,
                                             self._grasped, ObjectState(self._points))

    def freeze(self) -> None:
        """Linearity probe mode: keep the current ground-truth Jacobian for all later steps"""
        self._frozen_jacobian = self.true_jacobian()

    def unfreeze(self) -> None:
        self._frozen_jacobian = None

    def copy(self) -> "ToyWorld":
        return copy.copy(self)

    def clearance(self) -> float:
        """Smallest signed gripper-obstacle gap (inf without obstacles)"""
        if not self._obstacles:
            return float("inf")
        gaps = []
        for pose in self._grippers:
            for obstacle in self._obstacles:
                if isinstance(obstacle, SphereObstacle):
                    gap = np.linalg.norm(pose.translation - obstacle.center) - obstacle.radius
                else:
                    gap = (pose.translation - obstacle.point) @ obstacle.normal
                gaps.append(float(gap) - self.gripper_radius)
        return min(gaps)

    def max_stretch(self) -> float:
        """Largest excess of a pairwise separation over its relaxed distance"""
        separation = np.linalg.norm(self._points[:, None, :] - self._points[None, :, :], axis=2)
        return float(np.max(separation - self._distances.D))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def _translate_grippers(params: DiminishingRigidityParams, points: np.ndarray, D: GeodesicDistanceMatrix,
                        grippers: Sequence[GripperPose], grasped: Sequence[Sequence[int]],
                        displacements: Sequence[np.ndarray]) -> np.ndarray:
    """Configuration reached by translating the grippers; path independent for pure translations"""
    J = diminishing_rigidity_jacobian(params, D, grippers, grasped, ObjectState(points))
    qdot = np.concatenate([np.concatenate([d, np.zeros(3)]) for d in displacements])
    return points + (J @ qdot).reshape(-1, 3)


def make_toy_world(scenario: str, point_count: int = 20, spacing: float = 0.025,
                   time_step: float = 0.1, gripper_radius: float = 0.01,
                   true_params: DiminishingRigidityParams = HIDDEN_RIGIDITY) -> ToyWorld:
    """Build one of the named scenarios

    Targets (and for chain-spread the starting configuration) are produced by
    translating the grippers under the hidden dynamics, so every task is
    reachable.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{scenario}' (choose from {', '.join(SCENARIOS)})")
    if point_count < 2:
        raise ConfigError("a chain needs at least two points")

    relaxed = np.zeros((point_count, 3))
    relaxed[:, 0] = spacing * np.arange(point_count)
    edges = chain_edges(point_count, spacing)
    grasped = [[0], [point_count - 1]]
    length = spacing * (point_count - 1)
    D = geodesic_distance_matrix(relaxed, edges)

    def grippers_at(points: np.ndarray) -> List[GripperPose]:
        return [GripperPose.at(points[0]), GripperPose.at(points[-1])]

    shift = 0.2 * length
    initial = relaxed
    obstacles: List[Obstacle] = []
    if scenario == "line-to-arc":
        goal = _translate_grippers(true_params, relaxed, D, grippers_at(relaxed), grasped,
                                   [np.array([shift, 0.0, shift]), np.array([-shift, 0.0, shift])])
    elif scenario == "chain-spread":
        initial = _translate_grippers(true_params, relaxed, D, grippers_at(relaxed), grasped,
                                      [np.array([0.8 * shift, 0.0, 0.0]), np.array([-0.8 * shift, 0.0, 0.0])])
        goal = relaxed
        obstacles.append(PlaneObstacle(np.array([0.0, 0.0, -0.1]), np.array([0.0, 0.0, 1.0])))
    else:
        lateral = np.array([0.0, 1.2 * shift, 0.0])
        goal = _translate_grippers(true_params, relaxed, D, grippers_at(relaxed), grasped, [lateral, lateral])
        obstacles.append(SphereObstacle(np.array([0.0, 0.6 * shift, 0.035]), 0.02))

    world = ToyWorld(scenario, relaxed, edges, grasped, grippers_at(initial), TargetSet(goal),
                     obstacles, initial_points=initial, true_params=true_params,
                     time_step=time_step, gripper_radius=gripper_radius)
    logger.debug(f"Toy world '{scenario}': P={point_count}, initial error {world.error():.4f}")
    return world


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

def run_task_trial(world: ToyWorld, models: Sequence[DeformationModel], algorithm: Algorithm, steps: int,
                   config: ControllerConfig, rng: Optional[np.random.Generator] = None,
                   params: Optional[BanditParams] = None, run: int = 0,
                   evaluate_regret: bool = True) -> TrialRecord:
    """Run the main loop on ``world`` (mutated in place) for up to ``steps`` iterations"""
    if steps < 1:
        raise ConfigError("a trial needs at least one step")
    bandit = make_selector(algorithm, len(models), params, rng)
    trial = TrialRecord(run, algorithm.value, world.error())
    regret = 0.0
    for step in range(steps):
        previewed = None
        if evaluate_regret or bandit.needs_preview:
            try:
                previewed = preview_rewards(world, models, config)
            except ModelBanditError as exc:
                logger.error(f"Run {run} {algorithm.value} step {step}: preview failed: {exc}")
                trial.status = f"aborted: {exc}"
                break
        record = main_loop_step(world, models, bandit, config, run, step, regret, previewed)
        trial.steps.append(record)
        if record.status != "ok":
            trial.status = record.status
            break
        regret = record.cum_regret
    logger.info(f"Run {run} {algorithm.value} on '{world.name}': error {trial.initial_error:.4f} -> "
                f"{trial.final_error:.4f} after {len(trial.steps)} steps")
    return trial


@dataclass
class TaskResult:
    trials: List[TrialRecord]
    summary: List[SummaryRow]
    seeds: Dict[str, List[int]]


def default_model_set(world: ToyWorld, config: Optional[ModelSetConfig] = None) -> List[JacobianModel]:
    return model_set_factory(config or ModelSetConfig(), world.relaxed_distances, world.grasped, world.sense())


def run_task(scenario: str, steps: int, runs: int = 1, seed: int = 0,
             algorithms: Sequence[Algorithm] = BANDIT_ALGORITHMS,
             config: Optional[ControllerConfig] = None, params: Optional[BanditParams] = None,
             time_step: float = 0.1, evaluate_regret: bool = True, jobs: int = 1,
             world_factory: Optional[Callable[[], ToyWorld]] = None) -> TaskResult:
    """Fresh world and model set per (run, algorithm); selection streams seeded per run"""
    config = config or ControllerConfig()

    def build_world() -> ToyWorld:
        if world_factory is not None:
            return world_factory()
        return make_toy_world(scenario, time_step=time_step, gripper_radius=config.gripper_radius)

    def one(run: int, algorithm: Algorithm) -> TrialRecord:
        world = build_world()
        rng = named_stream(selection_seed(seed, run), algorithm.value)
        return run_task_trial(world, default_model_set(world), algorithm, steps, config, rng,
                              params, run, evaluate_regret)

    start = time.time()
    tasks = [(run, algorithm) for run in range(runs) for algorithm in algorithms]
    results: Dict[Tuple[int, int], TrialRecord] = {}
    if jobs <= 1:
        for index, (run, algorithm) in enumerate(tasks):
            results[(run, index)] = one(run, algorithm)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(one, run, algorithm): (run, index)
                       for index, (run, algorithm) in enumerate(tasks)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    trials = [results[key] for key in sorted(results)]
    logger.info(f"Task '{scenario}' finished in {time.time() - start:.1f}s")
    summary = summarize(scenario, trials, [a.value for a in algorithms])
    return TaskResult(trials, summary, {"selection": [selection_seed(seed, r) for r in range(runs)]})
