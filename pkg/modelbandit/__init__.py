"""
ModelBandit - bandit-based model selection for deformable object manipulation

A set of approximate Jacobian deformation models is treated as the arms of a
non-stationary, dependent multi-armed bandit; UCB1-Normal, KF-MANB or KF-MANDB
picks which model commands the robot each step.
"""

__version__ = "1.0.0"
__author__ = "ModelBandit Team"

from .errors import (
    ConfigError,
    DimensionError,
    DisconnectedGraphError,
    InputError,
    ModelBanditError,
    NumericalError,
    OutputError,
    WorldStepError,
)
from .interfaces import ArmSelector, DeformationModel, World
from .models import (
    Algorithm,
    BenchmarkPreset,
    GripperPose,
    ObjectState,
    RewardObservation,
    RobotCommand,
    StepRecord,
    SummaryRow,
    TrialRecord,
    WeightedLeastSquaresProblem,
)
from .solver import solve_ball_constrained_wls

__all__ = [
    "__version__",
    # Errors
    "ModelBanditError",
    "DimensionError",
    "InputError",
    "ConfigError",
    "DisconnectedGraphError",
    "NumericalError",
    "OutputError",
    "WorldStepError",
    # Interfaces
    "DeformationModel",
    "ArmSelector",
    "World",
    # Models
    "Algorithm",
    "BenchmarkPreset",
    "GripperPose",
    "ObjectState",
    "RewardObservation",
    "RobotCommand",
    "StepRecord",
    "SummaryRow",
    "TrialRecord",
    "WeightedLeastSquaresProblem",
    # Solver
    "solve_ball_constrained_wls",
]
