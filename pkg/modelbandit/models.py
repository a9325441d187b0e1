"""
Data models for ModelBandit with type hints

Value types shared by the geometry, solver, deformation-model, bandit,
controller and experiment layers. Arrays are stored as float64 numpy arrays
and treated as immutable once wrapped.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, List, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, InputError

ORTHONORMAL_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12


def _as_vector(values: Any, size: int, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.shape != (size,):
        raise DimensionError(f"{name} must have {size} components, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InputError(f"{name} must be finite")
    array.setflags(write=False)
    return array


class Algorithm(Enum):
    """Arm-selection algorithms"""
    UCB1_NORMAL = "ucb1-normal"
    KF_MANB = "kf-manb"
    KF_MANDB = "kf-mandb"
    FIXED = "fixed"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        try:
            return cls(name.lower())
        except ValueError:
            choices = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown algorithm '{name}' (choose from {choices})") from None


BANDIT_ALGORITHMS = (Algorithm.UCB1_NORMAL, Algorithm.KF_MANB, Algorithm.KF_MANDB)


# ---------------------------------------------------------------------------
# Rigid-body geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GripperPose:
    """Pose of one free-floating gripper in the world frame"""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=float)
        if rotation.shape != (3, 3):
            raise DimensionError(f"rotation must be 3x3, got {rotation.shape}")
        if not np.all(np.isfinite(rotation)):
            raise InputError("rotation must be finite")
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > ORTHONORMAL_TOLERANCE:
            raise InputError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise InputError("rotation must have determinant +1")
        rotation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", _as_vector(self.translation, 3, "translation"))

    @classmethod
    def at(cls, translation: Sequence[float]) -> "GripperPose":
        return cls(np.eye(3), np.asarray(translation, dtype=float))


@dataclass(frozen=True, eq=False)
class GripperTwist:
    """World-frame twist of one gripper: linear velocity v and angular velocity omega"""
    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", _as_vector(self.v, 3, "v"))
        object.__setattr__(self, "omega", _as_vector(self.omega, 3, "omega"))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.omega])

    @classmethod
    def from_vector(cls, vector: Sequence[float]) -> "GripperTwist":
        array = np.asarray(vector, dtype=float).reshape(-1)
        if array.shape != (6,):
            raise DimensionError(f"twist vector must have 6 components, got {array.shape}")
        return cls(array[:3], array[3:])

    @classmethod
    def zero(cls) -> "GripperTwist":
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class RobotCommand:
    """Stacked twists, one per gripper"""
    twists: Tuple[GripperTwist, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "twists", tuple(self.twists))

    @property
    def gripper_count(self) -> int:
        return len(self.twists)

    def as_vector(self) -> np.ndarray:
        if not self.twists:
            return np.zeros(0)
        return np.concatenate([t.as_vector() for t in self.twists])

    @classmethod
    def from_vector(cls, vector: Sequence[float]) -> "RobotCommand":
        array = np.asarray(vector, dtype=float).reshape(-1)
        if array.size % 6:
            raise DimensionError(f"command vector length {array.size} is not a multiple of 6")
        return cls(tuple(GripperTwist.from_vector(array[i:i + 6]) for i in range(0, array.size, 6)))

    @classmethod
    def zero(cls, gripper_count: int) -> "RobotCommand":
        return cls(tuple(GripperTwist.zero() for _ in range(gripper_count)))


# ---------------------------------------------------------------------------
# Object, targets, environment
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObjectState:
    """Deformable object configuration: P points in R^3"""
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float).reshape(-1, 3)
        if points.shape[0] < 1:
            raise InputError("object must have at least one point")
        if not np.all(np.isfinite(points)):
            raise InputError("object points must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def point_count(self) -> int:
        return int(self.points.shape[0])

    def flat(self) -> np.ndarray:
        return self.points.reshape(-1)


@dataclass(frozen=True, eq=False)
class TargetSet:
    """Task-defined target points"""
    targets: np.ndarray

    def __post_init__(self) -> None:
        targets = np.array(self.targets, dtype=float).reshape(-1, 3)
        if targets.shape[0] < 1:
            raise InputError("target set must contain at least one point")
        targets.setflags(write=False)
        object.__setattr__(self, "targets", targets)


@dataclass(frozen=True, eq=False)
class DesiredMotion:
    """Stacked per-point desired motion and per-point importance weights"""
    delta: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        delta = np.array(self.delta, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if delta.size != 3 * weights.size:
            raise DimensionError(f"delta has {delta.size} entries for {weights.size} weights")
        if np.any(weights < 0):
            raise InputError("weights must be non-negative")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "weights", weights)

    @property
    def point_count(self) -> int:
        return int(self.weights.size)

    def per_point(self) -> np.ndarray:
        return self.delta.reshape(-1, 3)

    @classmethod
    def zeros(cls, point_count: int) -> "DesiredMotion":
        return cls(np.zeros(3 * point_count), np.zeros(point_count))


@dataclass(frozen=True, eq=False)
class SphereObstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _as_vector(self.center, 3, "center"))
        if not self.radius > 0:
            raise InputError(f"sphere radius must be positive, got {self.radius}")


@dataclass(frozen=True, eq=False)
class PlaneObstacle:
    """Half-space bounded by a plane; the normal points out of the obstacle"""
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "point", _as_vector(self.point, 3, "point"))
        normal = _as_vector(self.normal, 3, "normal")
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise InputError("plane normal must be a unit vector")
        object.__setattr__(self, "normal", normal)


Obstacle = Union[SphereObstacle, PlaneObstacle]


@dataclass(frozen=True, eq=False)
class SensedState:
    """What the controller senses each step: object points and gripper poses"""
    points: ObjectState
    grippers: Tuple[GripperPose, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "grippers", tuple(self.grippers))

    @property
    def gripper_count(self) -> int:
        return len(self.grippers)


# ---------------------------------------------------------------------------
# Deformation models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiminishingRigidityParams:
    k_trans: float
    k_rot: float

    def __post_init__(self) -> None:
        if self.k_trans < 0 or self.k_rot < 0:
            raise InputError(f"rigidity parameters must be non-negative: {self}")


@dataclass(frozen=True, eq=False)
class AdaptiveJacobianState:
    """Online Jacobian estimate and its Broyden learning rate"""
    J_tilde: np.ndarray
    learning_rate: float

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise InputError(f"learning rate must lie in (0, 1], got {self.learning_rate}")
        J = np.array(self.J_tilde, dtype=float)
        if J.ndim != 2:
            raise DimensionError("J_tilde must be a matrix")
        if not np.all(np.isfinite(J)):
            raise InputError("J_tilde must be finite")
        J.setflags(write=False)
        object.__setattr__(self, "J_tilde", J)


@dataclass(frozen=True, eq=False)
class GeodesicDistanceMatrix:
    """Pairwise shortest-path distances over the relaxed object"""
    D: np.ndarray

    def __post_init__(self) -> None:
        D = np.array(self.D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise DimensionError(f"distance matrix must be square, got {D.shape}")
        if not np.all(D >= 0):
            raise InputError("distances must be non-negative")
        if np.any(np.diag(D) != 0):
            raise InputError("distance matrix must have a zero diagonal")
        scale = max(1.0, float(np.max(D))) if D.size else 1.0
        if np.max(np.abs(D - D.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
            raise InputError("distance matrix must be symmetric")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @property
    def point_count(self) -> int:
        return int(self.D.shape[0])


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightedLeastSquaresProblem:
    """min ||J qdot - target||^2_W  s.t.  ||qdot|| <= max_norm

    Each weight applies to ``block_size`` consecutive rows of J (3 for object
    points, 1 for plain vectors).
    """
    J: np.ndarray
    target: np.ndarray
    weights: np.ndarray
    max_norm: float
    block_size: int = 3

    def __post_init__(self) -> None:
        J = np.asarray(self.J, dtype=float)
        target = np.asarray(self.target, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if J.ndim != 2:
            raise DimensionError("J must be a matrix")
        if J.shape[0] != target.size:
            raise DimensionError(f"J has {J.shape[0]} rows but target has {target.size} entries")
        if J.shape[0] != self.block_size * weights.size:
            raise DimensionError(
                f"J has {J.shape[0]} rows, expected {self.block_size} x {weights.size} weights"
            )
        for name, array in (("J", J), ("target", target), ("weights", weights)):
            if not np.all(np.isfinite(array)):
                raise InputError(f"{name} must be finite")
        if np.any(weights < 0):
            raise InputError("weights must be non-negative")
        if not (math.isfinite(self.max_norm) and self.max_norm > 0):
            raise InputError(f"max_norm must be positive and finite, got {self.max_norm}")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "weights", weights)

    def row_weights(self) -> np.ndarray:
        return np.repeat(self.weights, self.block_size)


# ---------------------------------------------------------------------------
# Bandit beliefs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardObservation:
    arm: int
    reward: float


@dataclass(frozen=True, eq=False)
class UCB1NormalState:
    counts: np.ndarray
    means: np.ndarray
    sum_squares: np.ndarray
    total: int = 0

    @classmethod
    def initial(cls, arm_count: int) -> "UCB1NormalState":
        return cls(np.zeros(arm_count, dtype=int), np.zeros(arm_count), np.zeros(arm_count), 0)

    @property
    def arm_count(self) -> int:
        return int(self.counts.size)


@dataclass(frozen=True, eq=False)
class KFMANBState:
    means: np.ndarray
    variances: np.ndarray
    sigma_tr_sq: float
    sigma_ob_sq: float

    @classmethod
    def initial(cls, arm_count: int, sigma_tr_sq: float, sigma_ob_sq: float,
                prior_mean: float = 0.0, prior_variance: float = 1e6) -> "KFMANBState":
        return cls(np.full(arm_count, prior_mean), np.full(arm_count, prior_variance),
                   sigma_tr_sq, sigma_ob_sq)

    @property
    def arm_count(self) -> int:
        return int(self.means.size)


@dataclass(frozen=True, eq=False)
class KFMANDBState:
    mean: np.ndarray
    covariance: np.ndarray
    sigma_tr_sq: float
    sigma_obs_sq: float
    xi: float
    eta: float = 1.0

    @classmethod
    def initial(cls, arm_count: int, sigma_tr_sq: float, sigma_obs_sq: float, xi: float,
                eta0: float = 1.0) -> "KFMANDBState":
        prior = 1e6 * eta0 ** 2
        return cls(np.zeros(arm_count), np.eye(arm_count) * prior,
                   sigma_tr_sq, sigma_obs_sq, xi, eta0)

    @property
    def arm_count(self) -> int:
        return int(self.mean.size)


# ---------------------------------------------------------------------------
# Experiment records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkPreset:
    name: str
    model_count: int
    n: int
    m: int
    pulls: int = 1000
    runs: int = 100
    system_noise: float = 0.1
    model_noise: float = 0.025
    v_max_e: float = 0.1

    def __post_init__(self) -> None:
        for key in ("model_count", "n", "m", "pulls", "runs"):
            if getattr(self, key) < 1:
                raise InputError(f"preset field {key} must be a positive integer")


@dataclass
class StepRecord:
    run: int
    algorithm: str
    step: int
    arm: int
    reward: float
    best_reward: float
    error: float
    eta: float
    cum_regret: float
    status: str = "ok"

    def to_row(self) -> List[Any]:
        return [self.run, self.algorithm, self.step, self.arm, self.reward,
                self.best_reward, self.error, self.eta, self.cum_regret]


@dataclass
class TrialRecord:
    run: int
    algorithm: str
    initial_error: float
    steps: List[StepRecord] = field(default_factory=list)
    status: str = "ok"

    @property
    def total_regret(self) -> float:
        return self.steps[-1].cum_regret if self.steps else 0.0

    @property
    def final_error(self) -> float:
        return self.steps[-1].error if self.steps else self.initial_error

    @property
    def aborted(self) -> bool:
        return self.status != "ok"

    @property
    def regret_measured(self) -> bool:
        """False when some step ran without the best-arm reward, so total_regret is not a regret"""
        return not any(math.isnan(step.best_reward) for step in self.steps)


@dataclass(frozen=True)
class SummaryRow:
    preset: str
    algorithm: str
    runs: int
    mean_total_regret: float
    std_total_regret: float

    def to_row(self) -> List[Any]:
        return [self.preset, self.algorithm, self.runs, self.mean_total_regret, self.std_total_regret]
