"""
mbpre - Critical multitype branching processes in random environment
ランダム環境下の臨界多型分枝過程のシミュレーションと検証
"""

__version__ = "0.1.0"

from .environment import EnvironmentModel, ModelKind, build_scenario
from .runner import ConfigValidationError, ExperimentConfig, load_config
from .core import BranchingLab, CommandResult, CommandType, run

__all__ = [
    "__version__",
    "EnvironmentModel",
    "ModelKind",
    "build_scenario",
    "ConfigValidationError",
    "ExperimentConfig",
    "load_config",
    "BranchingLab",
    "CommandResult",
    "CommandType",
    "run",
]
