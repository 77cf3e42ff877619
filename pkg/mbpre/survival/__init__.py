"""
Survival of the branching process: particle simulation, annealed
generating-function estimates and the √n scaling fit
"""

from .annealed import (
    BetaFit,
    ScalingReport,
    SplitSurvival,
    annealed_survival,
    backward_survival,
    fit_beta,
    split_survival,
)
from .population import (
    DEFAULT_CAP,
    BranchingState,
    PopulationSurvival,
    PopulationTrajectory,
    population_survival,
    simulate_population,
)

__all__ = [
    "BetaFit",
    "ScalingReport",
    "SplitSurvival",
    "annealed_survival",
    "backward_survival",
    "fit_beta",
    "split_survival",
    "DEFAULT_CAP",
    "BranchingState",
    "PopulationSurvival",
    "PopulationTrajectory",
    "population_survival",
    "simulate_population",
]
