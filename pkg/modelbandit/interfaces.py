"""
Abstract interfaces and protocols for ModelBandit

Protocol-based contracts so models, arm selectors and worlds can be swapped
or mocked in tests.
"""

from typing import Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from .models import (
    Algorithm,
    GeodesicDistanceMatrix,
    Obstacle,
    RewardObservation,
    RobotCommand,
    SensedState,
    TargetSet,
)


@runtime_checkable
class DeformationModel(Protocol):
    """A prediction function phi(qdot) paired with a command function psi(Pdot, W)"""

    name: str

    def jacobian(self, state: Optional[SensedState] = None) -> np.ndarray:
        """Current Jacobian estimate"""
        ...

    def predict(self, qdot: np.ndarray, state: Optional[SensedState] = None) -> np.ndarray:
        """Predicted object motion for robot motion qdot"""
        ...

    def command(self, delta: np.ndarray, weights: np.ndarray, max_norm: float,
                state: Optional[SensedState] = None,
                metric: Optional[np.ndarray] = None) -> np.ndarray:
        """Robot motion that best achieves the weighted desired object motion"""
        ...

    def observe(self, qdot: np.ndarray, observed: np.ndarray) -> bool:
        """Learn from an executed command; returns True when the model changed"""
        ...


@runtime_checkable
class ArmSelector(Protocol):
    """Bandit algorithm choosing which model commands the robot"""

    algorithm: Algorithm
    needs_similarity: bool
    needs_preview: bool

    @property
    def eta(self) -> float:
        ...

    def select(self, previewed_rewards: Optional[np.ndarray] = None) -> int:
        ...

    def update(self, observation: RewardObservation,
               similarity: Optional[np.ndarray] = None) -> None:
        ...


@runtime_checkable
class World(Protocol):
    """Anything the main loop can sense and command"""

    gripper_radius: float

    @property
    def obstacles(self) -> Sequence[Obstacle]:
        ...

    @property
    def grasped(self) -> Sequence[Sequence[int]]:
        ...

    @property
    def relaxed_distances(self) -> GeodesicDistanceMatrix:
        ...

    def sense(self) -> SensedState:
        ...

    def targets(self) -> TargetSet:
        ...

    def error(self) -> float:
        ...

    def step(self, command: RobotCommand) -> Tuple[SensedState, np.ndarray]:
        """Execute a command; returns the new state and the observed object velocity"""
        ...

    def preview_error(self, command: RobotCommand) -> float:
        """Error after executing command, leaving the world untouched"""
        ...
