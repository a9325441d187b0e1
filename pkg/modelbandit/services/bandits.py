"""
Arm-selection algorithms for choosing between deformation models

The belief updates are pure functions over the state value types in
``modelbandit.models``; the selector classes at the bottom of the module own
one state each, plus the annealed reward scale and their random stream.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, DimensionError, NumericalError
from ..geometry import command_metric
from ..models import (
    Algorithm,
    KFMANBState,
    KFMANDBState,
    RewardObservation,
    RobotCommand,
    UCB1NormalState,
)

logger = logging.getLogger(__name__)

ETA_FLOOR = 1e-10
ETA_DECAY = 0.9
JITTER_SCALE = 1e-12
JITTER_ATTEMPTS = 3
ZERO_COMMAND_NORM = 1e-10


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

def compute_reward(error_before: float, error_after: float) -> float:
    """Reward is the improvement in task error"""
    return float(error_before) - float(error_after)


def anneal_eta(eta: float, reward: float) -> float:
    return max(ETA_FLOOR, ETA_DECAY * eta + (1.0 - ETA_DECAY) * abs(reward))


# ---------------------------------------------------------------------------
# UCB1-Normal
# ---------------------------------------------------------------------------

def ucb1_exploration_threshold(total: int) -> int:
    """Minimum plays per arm before the upper-confidence branch is used"""
    return max(1, math.ceil(8.0 * math.log(max(total, 1))))


def ucb1_index(state: UCB1NormalState) -> np.ndarray:
    """Upper confidence bound of every arm (requires n_j >= 2 and n >= 2)"""
    counts = state.counts.astype(float)
    variance = (state.sum_squares - counts * state.means ** 2) / (counts - 1.0)
    variance = np.clip(variance, 0.0, None)
    return state.means + np.sqrt(16.0 * variance * math.log(state.total - 1) / counts)


def ucb1_select(state: UCB1NormalState) -> int:
    if state.arm_count == 1:
        return 0
    threshold = ucb1_exploration_threshold(state.total)
    under_played = state.counts < threshold
    if np.any(under_played):
        candidates = np.flatnonzero(under_played)
        return int(candidates[np.argmin(state.counts[candidates])])
    return int(np.argmax(ucb1_index(state)))


def ucb1_update(state: UCB1NormalState, obs: RewardObservation) -> UCB1NormalState:
    j = obs.arm
    counts = state.counts.copy()
    means = state.means.copy()
    sum_squares = state.sum_squares.copy()
    counts[j] += 1
    means[j] += (obs.reward - means[j]) / counts[j]
    sum_squares[j] += obs.reward ** 2
    return UCB1NormalState(counts, means, sum_squares, state.total + 1)


# ---------------------------------------------------------------------------
# KF-MANB: one independent Kalman filter per arm
# ---------------------------------------------------------------------------

def kfmanb_select(state: KFMANBState, rng: np.random.Generator) -> int:
    """Thompson sample each arm's utility and pull the largest"""
    draws = rng.normal(state.means, np.sqrt(state.variances))
    return int(np.argmax(draws))


def kfmanb_update(state: KFMANBState, obs: RewardObservation, noise_scale: float = 1.0) -> KFMANBState:
    """Scalar Kalman step; ``noise_scale`` multiplies both noise variances"""
    sigma_tr = state.sigma_tr_sq * noise_scale
    sigma_ob = state.sigma_ob_sq * noise_scale
    means = state.means.copy()
    variances = state.variances + sigma_tr

    j = obs.arm
    prior = state.variances[j] + sigma_tr
    denominator = prior + sigma_ob
    means[j] = (prior * obs.reward + sigma_ob * state.means[j]) / denominator
    variances[j] = prior * sigma_ob / denominator
    return replace(state, means=means, variances=variances)


# ---------------------------------------------------------------------------
# KF-MANDB: one joint Kalman filter over all arms
# ---------------------------------------------------------------------------

def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def positive_definite_factor(covariance: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Cholesky factor of covariance, adding diagonal jitter when needed

    Returns the (possibly jittered) covariance and its lower factor.
    """
    covariance = _symmetrize(covariance)
    size = covariance.shape[0]
    jitter = JITTER_SCALE * max(float(np.trace(covariance)) / size, JITTER_SCALE)
    for attempt in range(JITTER_ATTEMPTS + 1):
        try:
            return covariance, np.linalg.cholesky(covariance)
        except np.linalg.LinAlgError:
            if attempt == JITTER_ATTEMPTS:
                break
            logger.debug(f"Covariance not positive definite, adding jitter {jitter:.3e}")
            covariance = covariance + jitter * np.eye(size)
    raise NumericalError(f"covariance is not positive definite after {JITTER_ATTEMPTS} jitter attempts")


def kfmandb_predict(state: KFMANDBState, similarity: np.ndarray) -> KFMANDBState:
    """Add process noise sigma_tr^2 eta^2 (xi Sigma + (1 - xi) I)"""
    similarity = np.asarray(similarity, dtype=float)
    M = state.arm_count
    if similarity.shape != (M, M):
        raise DimensionError(f"similarity must be {M}x{M}, got {similarity.shape}")
    process = state.sigma_tr_sq * state.eta ** 2 * (state.xi * similarity + (1.0 - state.xi) * np.eye(M))
    covariance, _ = positive_definite_factor(state.covariance + process)
    return replace(state, covariance=covariance)


def kfmandb_correct(state: KFMANDBState, obs: RewardObservation) -> KFMANDBState:
    """Condition the joint belief on one arm's reward"""
    j = obs.arm
    C = state.covariance
    innovation_variance = C[j, j] + state.sigma_obs_sq * state.eta ** 2
    gain = C[:, j] / innovation_variance
    mean = state.mean + gain * (obs.reward - state.mean[j])
    covariance = _symmetrize(C - np.outer(gain, C[j, :]))
    return replace(state, mean=mean, covariance=covariance)


def kfmandb_sample(state: KFMANDBState, standard_normal: np.ndarray) -> np.ndarray:
    """Map a standard normal vector to a draw from the joint utility belief"""
    _, factor = positive_definite_factor(state.covariance)
    return state.mean + factor @ np.asarray(standard_normal, dtype=float)


def kfmandb_select(state: KFMANDBState, rng: np.random.Generator) -> int:
    if state.arm_count == 1:
        return 0
    sample = kfmandb_sample(state, rng.standard_normal(state.arm_count))
    return int(np.argmax(sample))


# ---------------------------------------------------------------------------
# Command similarity
# ---------------------------------------------------------------------------

def vector_similarity_matrix(vectors: np.ndarray, metric: Optional[np.ndarray] = None) -> np.ndarray:
    """Cosine similarity between rows under the diagonal metric (Euclidean if None)

    Rows with norm below 1e-10 get similarity 0 to every other row.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        raise DimensionError("vectors must be stacked as rows of a matrix")
    weighted = X if metric is None else X * np.asarray(metric, dtype=float)[None, :]
    gram = X @ weighted.T
    norms = np.sqrt(np.clip(np.diag(gram), 0.0, None))
    nonzero = norms >= ZERO_COMMAND_NORM
    safe = np.where(nonzero, norms, 1.0)
    similarity = gram / np.outer(safe, safe)
    similarity[~nonzero, :] = 0.0
    similarity[:, ~nonzero] = 0.0
    similarity = np.clip(_symmetrize(similarity), -1.0, 1.0)
    np.fill_diagonal(similarity, 1.0)
    return similarity


def command_similarity_matrix(commands: Sequence[RobotCommand], c: float) -> np.ndarray:
    """M x M cosine similarity of the arms' proposed commands under the c-scaled inner product"""
    if not commands:
        return np.zeros((0, 0))
    gripper_count = commands[0].gripper_count
    if any(cmd.gripper_count != gripper_count for cmd in commands):
        raise DimensionError("all commands must drive the same number of grippers")
    stacked = np.vstack([cmd.as_vector() for cmd in commands])
    return vector_similarity_matrix(stacked, command_metric(gripper_count, c))


# ---------------------------------------------------------------------------
# Selectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BanditParams:
    """Noise and coupling parameters shared by the Kalman selectors"""
    sigma_tr_sq: float = 1.0
    sigma_obs_sq: float = 1.0
    xi: float = 0.9
    eta0: float = 1.0
    fixed_arm: int = 0

    def __post_init__(self) -> None:
        if self.sigma_tr_sq < 0 or self.sigma_obs_sq <= 0:
            raise ConfigError("noise variances must be non-negative (observation noise positive)")
        if not 0.0 <= self.xi <= 1.0:
            raise ConfigError(f"correlation strength xi must lie in [0, 1], got {self.xi}")
        if self.eta0 < ETA_FLOOR:
            raise ConfigError(f"initial eta must be at least {ETA_FLOOR}")


class BanditSelector(ABC):
    """Common bookkeeping: arm count and the annealed reward scale"""

    algorithm: Algorithm
    needs_similarity = False
    needs_preview = False

    def __init__(self, arm_count: int, eta0: float = 1.0):
        if arm_count < 1:
            raise ConfigError("a bandit needs at least one arm")
        self.arm_count = arm_count
        self._eta = eta0

    @property
    def eta(self) -> float:
        return self._eta

    @abstractmethod
    def select(self, previewed_rewards: Optional[np.ndarray] = None) -> int:
        ...

    def update(self, observation: RewardObservation, similarity: Optional[np.ndarray] = None) -> None:
        if not 0 <= observation.arm < self.arm_count:
            raise DimensionError(f"arm {observation.arm} out of range for {self.arm_count} arms")
        self._eta = anneal_eta(self._eta, observation.reward)
        self._learn(observation, similarity)

    def _learn(self, observation: RewardObservation, similarity: Optional[np.ndarray]) -> None:
        pass


class UCB1NormalBandit(BanditSelector):
    algorithm = Algorithm.UCB1_NORMAL

    def __init__(self, arm_count: int, eta0: float = 1.0):
        super().__init__(arm_count, eta0)
        self.state = UCB1NormalState.initial(arm_count)

    def select(self, previewed_rewards: Optional[np.ndarray] = None) -> int:
        return ucb1_select(self.state)

    def _learn(self, observation: RewardObservation, similarity: Optional[np.ndarray]) -> None:
        self.state = ucb1_update(self.state, observation)


class KFMANBBandit(BanditSelector):
    algorithm = Algorithm.KF_MANB

    def __init__(self, arm_count: int, params: BanditParams, rng: np.random.Generator):
        super().__init__(arm_count, params.eta0)
        self.state = KFMANBState.initial(arm_count, params.sigma_tr_sq, params.sigma_obs_sq,
                                         prior_variance=1e6 * params.eta0 ** 2)
        self.rng = rng

    def select(self, previewed_rewards: Optional[np.ndarray] = None) -> int:
        return kfmanb_select(self.state, self.rng)

    def _learn(self, observation: RewardObservation, similarity: Optional[np.ndarray]) -> None:
        self.state = kfmanb_update(self.state, observation, noise_scale=self.eta ** 2)


class KFMANDBBandit(BanditSelector):
    algorithm = Algorithm.KF_MANDB
    needs_similarity = True

    def __init__(self, arm_count: int, params: BanditParams, rng: np.random.Generator):
        super().__init__(arm_count, params.eta0)
        self.state = KFMANDBState.initial(arm_count, params.sigma_tr_sq, params.sigma_obs_sq,
                                          params.xi, params.eta0)
        self.rng = rng

    def select(self, previewed_rewards: Optional[np.ndarray] = None) -> int:
        return kfmandb_select(self.state, self.rng)

    def _learn(self, observation: RewardObservation, similarity: Optional[np.ndarray]) -> None:
        if similarity is None:
            raise ConfigError("KF-MANDB needs the similarity matrix of the proposed commands")
        state = replace(self.state, eta=self.eta)
        state = kfmandb_predict(state, similarity)
        self.state = kfmandb_correct(state, observation)


class FixedArmBandit(BanditSelector):
    """Single-model baseline: always pulls the same arm"""
    algorithm = Algorithm.FIXED

    def __init__(self, arm_count: int, arm: int = 0):
        super().__init__(arm_count)
        if not 0 <= arm < arm_count:
            raise ConfigError(f"fixed arm {arm} out of range for {arm_count} arms")
        self.arm = arm

    def select(self, previewed_rewards: Optional[np.ndarray] = None) -> int:
        return self.arm


class OracleBandit(BanditSelector):
    """Pulls the arm with the largest realised reward this step"""
    algorithm = Algorithm.ORACLE
    needs_preview = True

    def select(self, previewed_rewards: Optional[np.ndarray] = None) -> int:
        if previewed_rewards is None:
            raise ConfigError("the oracle selector needs the previewed rewards of every arm")
        return int(np.argmax(previewed_rewards))


def make_selector(algorithm: Algorithm, arm_count: int, params: Optional[BanditParams] = None,
                  rng: Optional[np.random.Generator] = None) -> BanditSelector:
    params = params or BanditParams()
    if algorithm is Algorithm.UCB1_NORMAL:
        return UCB1NormalBandit(arm_count, params.eta0)
    if algorithm is Algorithm.FIXED:
        return FixedArmBandit(arm_count, params.fixed_arm)
    if algorithm is Algorithm.ORACLE:
        return OracleBandit(arm_count, params.eta0)
    if rng is None:
        raise ConfigError(f"{algorithm.value} needs a random generator")
    if algorithm is Algorithm.KF_MANB:
        return KFMANBBandit(arm_count, params, rng)
    if algorithm is Algorithm.KF_MANDB:
        return KFMANDBBandit(arm_count, params, rng)
    raise ConfigError(f"unsupported algorithm {algorithm}")
