"""
Services: deformation models, arm selectors, the controller and result reporting
"""

from .bandits import BanditParams, make_selector
from .controller import ControllerConfig, main_loop_step
from .deformation import ModelSetConfig, model_set_factory
from .reporter import summarize, write_results

__all__ = [
    "BanditParams",
    "make_selector",
    "ControllerConfig",
    "main_loop_step",
    "ModelSetConfig",
    "model_set_factory",
    "summarize",
    "write_results",
]
