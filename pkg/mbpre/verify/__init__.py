"""
Property campaigns behind the verify command
"""

from .checks import CHECKS, CheckResult, check_streams, results_frame, run_check, run_verification
from .instances import random_chain, random_component, random_law, random_matrix, random_point, random_s

__all__ = [
    "CHECKS",
    "CheckResult",
    "check_streams",
    "run_check",
    "run_verification",
    "results_frame",
    "random_law",
    "random_component",
    "random_chain",
    "random_matrix",
    "random_point",
    "random_s",
]
