"""
Jacobian-based deformation models

Three families share one command function (the ball-constrained weighted
least-squares solve): diminishing-rigidity Jacobians built from geodesic
distances, adaptive Jacobians refined online by Broyden updates, and constant
Jacobians used by the synthetic experiments.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .. import solver
from ..errors import ConfigError, DimensionError, DisconnectedGraphError, InputError
from ..models import (
    AdaptiveJacobianState,
    DiminishingRigidityParams,
    GeodesicDistanceMatrix,
    GripperPose,
    ObjectState,
    SensedState,
    WeightedLeastSquaresProblem,
)

logger = logging.getLogger(__name__)

BROYDEN_MIN_COMMAND_SQ = 1e-12

Edge = Union[Tuple[int, int], Tuple[int, int, float]]


# ---------------------------------------------------------------------------
# Geodesic distances
# ---------------------------------------------------------------------------

def geodesic_distance_matrix(relaxed_points: Sequence[Sequence[float]],
                             edges: Sequence[Edge]) -> GeodesicDistanceMatrix:
    """All-pairs shortest paths over the relaxed object's edge graph

    Edges are (i, j) pairs, optionally with an explicit length as a third
    element; missing lengths default to the Euclidean distance between the
    relaxed points.
    """
    points = np.asarray(relaxed_points, dtype=float).reshape(-1, 3)
    count = points.shape[0]
    rows, cols, lengths = [], [], []
    for edge in edges:
        i, j = int(edge[0]), int(edge[1])
        if not (0 <= i < count and 0 <= j < count) or i == j:
            raise InputError(f"invalid edge {edge} for {count} points")
        length = float(edge[2]) if len(edge) > 2 else float(np.linalg.norm(points[i] - points[j]))  # type: ignore[misc]
        if not (math.isfinite(length) and length > 0):
            raise InputError(f"edge {edge} must have a positive finite length")
        rows.append(i)
        cols.append(j)
        lengths.append(length)

    graph = coo_matrix((lengths, (rows, cols)), shape=(count, count)).tocsr()
    n_components, labels = connected_components(graph, directed=False)
    if n_components > 1:
        components = [np.flatnonzero(labels == c).tolist() for c in range(n_components)]
        raise DisconnectedGraphError(components)

    D = shortest_path(graph, method="D", directed=False)
    return GeodesicDistanceMatrix(0.5 * (D + D.T))


def chain_edges(point_count: int, spacing: float) -> List[Tuple[int, int, float]]:
    return [(i, i + 1, spacing) for i in range(point_count - 1)]


def grid_edges(rows: int, cols: int, spacing: float) -> List[Tuple[int, int, float]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            index = r * cols + c
            if c + 1 < cols:
                edges.append((index, index + 1, spacing))
            if r + 1 < rows:
                edges.append((index, index + cols, spacing))
    return edges


# ---------------------------------------------------------------------------
# Jacobian constructions
# ---------------------------------------------------------------------------

def _batched_skew(vectors: np.ndarray) -> np.ndarray:
    out = np.zeros((vectors.shape[0], 3, 3))
    out[:, 0, 1] = -vectors[:, 2]
    out[:, 0, 2] = vectors[:, 1]
    out[:, 1, 0] = vectors[:, 2]
    out[:, 1, 2] = -vectors[:, 0]
    out[:, 2, 0] = -vectors[:, 1]
    out[:, 2, 1] = vectors[:, 0]
    return out


def gripper_distances(D: GeodesicDistanceMatrix, grasped: Sequence[Sequence[int]]) -> np.ndarray:
    """P x G matrix: geodesic distance from each point to the nearest point grasped by each gripper"""
    columns = []
    for g, indices in enumerate(grasped):
        if len(indices) == 0:
            raise ConfigError(f"gripper {g} does not grasp any point")
        columns.append(np.min(D.D[:, list(indices)], axis=1))
    return np.column_stack(columns)


def diminishing_rigidity_jacobian(params: DiminishingRigidityParams,
                                  D: GeodesicDistanceMatrix,
                                  robot: Sequence[GripperPose],
                                  grasped: Sequence[Sequence[int]],
                                  points: ObjectState) -> np.ndarray:
    """3P x 6G Jacobian whose per-point blocks decay exponentially with geodesic distance"""
    if len(robot) != len(grasped):
        raise DimensionError(f"{len(robot)} gripper poses but {len(grasped)} grasp sets")
    if D.point_count != points.point_count:
        raise DimensionError(f"distance matrix covers {D.point_count} points, object has {points.point_count}")

    P, G = points.point_count, len(robot)
    distances = gripper_distances(D, grasped)
    w_trans = np.exp(-params.k_trans * distances)
    w_rot = np.exp(-params.k_rot * distances)

    J = np.zeros((P, 3, 6 * G))
    eye = np.eye(3)
    for g, pose in enumerate(robot):
        levers = points.points - pose.translation
        J[:, :, 6 * g:6 * g + 3] = w_trans[:, g, None, None] * eye
        J[:, :, 6 * g + 3:6 * g + 6] = -w_rot[:, g, None, None] * _batched_skew(levers)
    return J.reshape(3 * P, 6 * G)


class BroydenResult(NamedTuple):
    state: AdaptiveJacobianState
    updated: bool


def broyden_update(state: AdaptiveJacobianState, qdot: np.ndarray,
                   observed: np.ndarray) -> BroydenResult:
    """Rank-one secant correction J + Gamma (Pdot - J qdot) qdot^T / (qdot^T qdot)"""
    qdot = np.asarray(qdot, dtype=float).reshape(-1)
    observed = np.asarray(observed, dtype=float).reshape(-1)
    J = state.J_tilde
    if J.shape != (observed.size, qdot.size):
        raise DimensionError(f"J_tilde is {J.shape}, update is {observed.size}x{qdot.size}")
    qq = float(qdot @ qdot)
    if qq <= BROYDEN_MIN_COMMAND_SQ:
        return BroydenResult(state, False)
    residual = observed - J @ qdot
    J_new = J + state.learning_rate * np.outer(residual, qdot) / qq
    return BroydenResult(AdaptiveJacobianState(J_new, state.learning_rate), True)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class JacobianModel(ABC):
    """Model whose prediction is J qdot and whose command solves the weighted ball problem"""

    name: str = "jacobian"

    @abstractmethod
    def jacobian(self, state: Optional[SensedState] = None) -> np.ndarray:
        ...

    def predict(self, qdot: np.ndarray, state: Optional[SensedState] = None) -> np.ndarray:
        return self.jacobian(state) @ np.asarray(qdot, dtype=float)

    def command(self, delta: np.ndarray, weights: np.ndarray, max_norm: float,
                state: Optional[SensedState] = None,
                metric: Optional[np.ndarray] = None) -> np.ndarray:
        J = self.jacobian(state)
        problem = WeightedLeastSquaresProblem(J, delta, weights, max_norm, _block_size(delta, weights))
        return solver.solve_ball_constrained_wls(problem, metric)

    def observe(self, qdot: np.ndarray, observed: np.ndarray) -> bool:
        return False

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


def _block_size(delta: np.ndarray, weights: np.ndarray) -> int:
    size = np.asarray(delta).size
    count = np.asarray(weights).size
    if count == 0 or size % count:
        raise DimensionError(f"{size} motion entries cannot be split over {count} weights")
    return size // count


class DiminishingRigidityModel(JacobianModel):
    def __init__(self, params: DiminishingRigidityParams, D: GeodesicDistanceMatrix,
                 grasped: Sequence[Sequence[int]]):
        self.params = params
        self.D = D
        self.grasped = [list(g) for g in grasped]
        self.name = f"dr(k_trans={params.k_trans:g},k_rot={params.k_rot:g})"

    def jacobian(self, state: Optional[SensedState] = None) -> np.ndarray:
        if state is None:
            raise InputError(f"{self.name} needs the sensed state to build its Jacobian")
        return diminishing_rigidity_jacobian(self.params, self.D, state.grippers,
                                             self.grasped, state.points)


class AdaptiveJacobianModel(JacobianModel):
    def __init__(self, initial: AdaptiveJacobianState):
        self.state = initial
        self.name = f"adaptive(gamma={initial.learning_rate:.0e})"
        self.skipped_updates = 0

    def jacobian(self, state: Optional[SensedState] = None) -> np.ndarray:
        return self.state.J_tilde

    def observe(self, qdot: np.ndarray, observed: np.ndarray) -> bool:
        result = broyden_update(self.state, qdot, observed)
        if not result.updated:
            self.skipped_updates += 1
            logger.debug(f"{self.name}: command too small, Broyden update skipped")
        self.state = result.state
        return result.updated


class ConstantJacobianModel(JacobianModel):
    """Fixed Jacobian; the normal-matrix factorisation is cached per weight vector"""

    def __init__(self, J: np.ndarray, name: str = "constant"):
        J = np.array(J, dtype=float)
        if J.ndim != 2:
            raise DimensionError("constant model needs a matrix")
        J.setflags(write=False)
        self.J = J
        self.name = name
        self._forms: Dict[Tuple[bytes, int], solver.SpectralForm] = {}

    def jacobian(self, state: Optional[SensedState] = None) -> np.ndarray:
        return self.J

    def command(self, delta: np.ndarray, weights: np.ndarray, max_norm: float,
                state: Optional[SensedState] = None,
                metric: Optional[np.ndarray] = None) -> np.ndarray:
        if metric is not None:
            return super().command(delta, weights, max_norm, state, metric)
        delta = np.asarray(delta, dtype=float).reshape(-1)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        block = _block_size(delta, weights)
        if delta.size != self.J.shape[0]:
            raise DimensionError(f"{self.name}: {delta.size} motion entries for {self.J.shape[0]} rows")
        key = (weights.tobytes(), block)
        form = self._forms.get(key)
        row_weights = np.repeat(weights, block)
        if form is None:
            form = solver.SpectralForm.of(self.J.T @ (self.J * row_weights[:, None]))
            self._forms[key] = form
        qdot, _ = solver.solve_spectral(form, self.J.T @ (row_weights * delta), max_norm)
        return qdot


def noisy_constant_models(J: np.ndarray, count: int, noise: float,
                          rng: np.random.Generator) -> List[ConstantJacobianModel]:
    """count copies of J, each perturbed elementwise by U(-noise, noise)"""
    return [
        ConstantJacobianModel(J + rng.uniform(-noise, noise, size=J.shape), name=f"constant[{i}]")
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# Model set factory
# ---------------------------------------------------------------------------

def _default_k_grid() -> List[float]:
    return [float(k) for k in range(0, 25, 4)]


def _default_learning_rates() -> List[float]:
    return [10.0 ** -e for e in range(0, 11)]


@dataclass
class ModelSetConfig:
    """Parameter grids for the model set

    ``kind`` is "deformable" (diminishing-rigidity grid plus adaptive models)
    or "synthetic" (noisy copies of ``synthetic_jacobian``).
    """
    kind: str = "deformable"
    k_trans_grid: List[float] = field(default_factory=_default_k_grid)
    k_rot_grid: List[float] = field(default_factory=_default_k_grid)
    learning_rates: List[float] = field(default_factory=_default_learning_rates)
    adaptive_seed: DiminishingRigidityParams = DiminishingRigidityParams(10.0, 10.0)
    synthetic_jacobian: Optional[np.ndarray] = None
    synthetic_count: int = 0
    synthetic_noise: float = 0.025


def model_set_factory(config: ModelSetConfig,
                      D: Optional[GeodesicDistanceMatrix] = None,
                      grasped: Optional[Sequence[Sequence[int]]] = None,
                      initial_state: Optional[SensedState] = None,
                      rng: Optional[np.random.Generator] = None) -> List[JacobianModel]:
    """Build the ordered model set: rigidity grid row-major by (k_trans, k_rot), then adaptive by descending rate"""
    if config.kind == "synthetic":
        if config.synthetic_jacobian is None or config.synthetic_count < 1:
            raise ConfigError("synthetic model set needs a true Jacobian and a positive model count")
        if rng is None:
            raise ConfigError("synthetic model set needs a random generator")
        return list(noisy_constant_models(config.synthetic_jacobian, config.synthetic_count,
                                          config.synthetic_noise, rng))
    if config.kind != "deformable":
        raise ConfigError(f"unknown model set kind '{config.kind}'")

    if not config.k_trans_grid or not config.k_rot_grid:
        raise ConfigError("diminishing-rigidity grids must not be empty")
    if D is None or grasped is None:
        raise ConfigError("deformable model set needs the geodesic distance matrix and grasp sets")

    models: List[JacobianModel] = [
        DiminishingRigidityModel(DiminishingRigidityParams(k_trans, k_rot), D, grasped)
        for k_trans in config.k_trans_grid
        for k_rot in config.k_rot_grid
    ]

    if config.learning_rates:
        if initial_state is None:
            raise ConfigError("adaptive models need the initial sensed state for their seed Jacobian")
        seed = diminishing_rigidity_jacobian(config.adaptive_seed, D, initial_state.grippers,
                                             grasped, initial_state.points)
        for rate in sorted(config.learning_rates, reverse=True):
            models.append(AdaptiveJacobianModel(AdaptiveJacobianState(seed.copy(), rate)))

    logger.info(f"Model set built: {len(models)} models")
    return models
