"""
Exception hierarchy for ModelBandit
"""

from typing import List, Optional


class ModelBanditError(Exception):
    """Base class for all ModelBandit errors"""


class DimensionError(ModelBanditError, ValueError):
    """Array shapes or gripper counts do not agree"""


class InputError(ModelBanditError, ValueError):
    """Non-finite or otherwise invalid numeric input"""


class ConfigError(ModelBanditError, ValueError):
    """Invalid configuration, parameter grid or scenario"""


class DisconnectedGraphError(ConfigError):
    """Relaxed-object edge graph has more than one connected component"""

    def __init__(self, components: List[List[int]]):
        self.components = components
        summary = "; ".join(
            f"component {i}: points {c[:5]}{'...' if len(c) > 5 else ''}"
            for i, c in enumerate(components)
        )
        super().__init__(f"Edge graph is disconnected ({len(components)} components): {summary}")


class NumericalError(ModelBanditError, ArithmeticError):
    """Covariance lost positive definiteness even after jitter"""


class WorldStepError(ModelBanditError):
    """The world could not execute a command"""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


class OutputError(ModelBanditError, OSError):
    """Result files could not be written"""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"could not write {path}: {reason}")
