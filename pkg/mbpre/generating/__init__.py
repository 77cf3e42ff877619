"""
Generating-function algebra: evaluation, composition, quenched survival and
the telescoping representation
"""

from .functions import (
    GfHandle,
    as_handle,
    delta2,
    evaluate,
    h_derivatives,
    h_of_z,
    kozlov_gap,
    one_minus_h,
    psi,
)
from .composition import (
    EXPLICIT_PRODUCT_LIMIT,
    CompositionChain,
    TelescopeReport,
    compose,
    quenched_survival,
    telescope,
    telescope_explicit,
)

__all__ = [
    "GfHandle",
    "as_handle",
    "evaluate",
    "delta2",
    "h_of_z",
    "h_derivatives",
    "one_minus_h",
    "kozlov_gap",
    "psi",
    "EXPLICIT_PRODUCT_LIMIT",
    "CompositionChain",
    "TelescopeReport",
    "compose",
    "quenched_survival",
    "telescope",
    "telescope_explicit",
]
