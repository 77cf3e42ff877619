"""
Products of random mean matrices: projective chain, associated walk and
condition checkers
"""

from .projective import (
    ProjectivePoint,
    as_point,
    cocycle,
    explicit_log_norm,
    min_log_norm,
    projective_action,
    ratio_constant,
)
from .walks import (
    KILL_TOLERANCE,
    InvariantMeasure,
    LyapunovEstimate,
    WalkBlock,
    WalkPath,
    advance_walks,
    invariant_measure,
    lyapunov,
    run_walk,
    sample_block,
    start_point,
)
from .conditions import ConditionReport, ConditionResult, check_conditions, positive_product_length

__all__ = [
    "ProjectivePoint",
    "as_point",
    "projective_action",
    "cocycle",
    "explicit_log_norm",
    "min_log_norm",
    "ratio_constant",
    "KILL_TOLERANCE",
    "WalkPath",
    "WalkBlock",
    "LyapunovEstimate",
    "InvariantMeasure",
    "start_point",
    "run_walk",
    "advance_walks",
    "sample_block",
    "lyapunov",
    "invariant_measure",
    "ConditionReport",
    "ConditionResult",
    "check_conditions",
    "positive_product_length",
]
