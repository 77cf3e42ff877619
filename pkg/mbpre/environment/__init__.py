"""
Offspring laws, environment components and random environment models
"""

from .models import (
    EnvironmentBlock,
    EnvironmentModel,
    EnvironmentPath,
    FractionalLinearFamily,
    ModelKind,
    common_eigen_matrix,
    common_left_eigenvector,
    eigenvalue_of,
    finite_mixture,
    fractional_linear_model,
    scalar_symmetric,
)
from .offspring import (
    EnvironmentComponent,
    FractionalLinearForm,
    OffspringLaw,
    dump_law_table,
    geometric_form_with_mean,
    make_fractional_linear,
    mean_matrix,
    permute_types,
    second_moments,
)
from .scenarios import PRESET_SCENARIOS, ScenarioSpecError, build_preset, build_scenario, list_presets


def sample_component(model: EnvironmentModel, rng) -> EnvironmentComponent:
    """model から環境成分を1つサンプリング"""
    return model.sample_component(rng)


__all__ = [
    "OffspringLaw",
    "FractionalLinearForm",
    "EnvironmentComponent",
    "EnvironmentModel",
    "EnvironmentPath",
    "EnvironmentBlock",
    "FractionalLinearFamily",
    "ModelKind",
    "sample_component",
    "mean_matrix",
    "second_moments",
    "make_fractional_linear",
    "geometric_form_with_mean",
    "dump_law_table",
    "permute_types",
    "finite_mixture",
    "fractional_linear_model",
    "scalar_symmetric",
    "common_left_eigenvector",
    "common_eigen_matrix",
    "eigenvalue_of",
    "PRESET_SCENARIOS",
    "ScenarioSpecError",
    "build_scenario",
    "build_preset",
    "list_presets",
]
