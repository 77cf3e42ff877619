"""
Harmonic function of the killed walk, τ-tail asymptotics and the hat measure
"""

from .estimates import (
    STABILITY_THRESHOLD,
    BoundFit,
    EnvelopeFit,
    ExactKilledWalk,
    HarmonicEstimate,
    LatticeHarmonic,
    TabulatedHarmonic,
    TauTailReport,
    estimate_h,
    exact_killed_walk,
    fit_bound_constants,
    fit_envelope,
    harmonicity_residual,
    tabulate_h,
    tau_tail,
)
from .hat_measure import FixedKCheck, HatEnsemble, HatSeries, fixed_k_check, hat_sampler, hat_series

__all__ = [
    "STABILITY_THRESHOLD",
    "HarmonicEstimate",
    "LatticeHarmonic",
    "TabulatedHarmonic",
    "TauTailReport",
    "EnvelopeFit",
    "BoundFit",
    "ExactKilledWalk",
    "estimate_h",
    "tabulate_h",
    "harmonicity_residual",
    "tau_tail",
    "fit_envelope",
    "fit_bound_constants",
    "exact_killed_walk",
    "HatEnsemble",
    "FixedKCheck",
    "HatSeries",
    "hat_sampler",
    "fixed_k_check",
    "hat_series",
]
