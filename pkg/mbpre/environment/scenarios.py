"""
Scenario definitions: building environment models from JSON-compatible specs,
and the named presets
"""

import math
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .models import (
    EnvironmentModel,
    FractionalLinearFamily,
    ModelKind,
    common_left_eigenvector,
    finite_mixture,
    fractional_linear_model,
    scalar_symmetric,
)
from .offspring import (
    EnvironmentComponent,
    FractionalLinearForm,
    OffspringLaw,
    geometric_form_with_mean,
)

# 名前付きシナリオ（設定ファイルの "scenario": {"preset": ...} で参照）
PRESET_SCENARIOS: Dict[str, Dict[str, Any]] = {
    "critical_geometric": {
        "kind": "finite_mixture",
        "components": [
            {"weight": 1.0, "fractional_linear": {"stall": [0.5], "geometric": [0.5], "mixers": [[1.0]]}}
        ],
        "description": "p=1, fixed environment f(s) = 1/(2-s)",
    },
    "lattice": {
        "kind": "scalar_symmetric",
        "delta": math.log(2.0),
        "description": "p=1, means 2 or 1/2 with probability 1/2 each",
    },
    "doubling": {
        "kind": "finite_mixture",
        "components": [{"weight": 1.0, "laws": [[[[2], 1.0]]]}],
        "description": "p=1, f(s) = s^2",
    },
    "two_type_critical": {
        "kind": "common_left_eigenvector",
        "v": [0.5, 0.5],
        "eigenvalues": [2.0, 0.5],
        "eigenvalue_weights": [0.5, 0.5],
        "mixing": [0.25, -0.25],
        "description": "p=2, common left eigenvector (1/2, 1/2), eigenvalues 2 and 1/2",
    },
    "two_type_fractional": {
        "kind": "finite_mixture",
        "components": [
            {"weight": 0.5, "geometric_means": [[1.2, 0.8], [0.5, 1.5]]},
            {"weight": 0.5, "geometric_means": [[0.3, 0.2], [0.1, 0.4]]},
        ],
        "description": "p=2, fractional-linear mixture with row sums 2 and 1/2",
    },
}


class ScenarioSpecError(ValueError):
    """シナリオ定義の検証エラー（(フィールドパス, メッセージ) のリストを保持）"""

    def __init__(self, issues: List[Tuple[str, str]]):
        self.issues = list(issues)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.issues))


def _float_array(value, path: str, issues: List[Tuple[str, str]], ndim: int):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        issues.append((path, "must be numeric"))
        return None
    if arr.ndim != ndim:
        issues.append((path, f"must be a {ndim}-dimensional numeric array"))
        return None
    return arr


def _range_array(value, path: str, issues: List[Tuple[str, str]], ndim: int):
    """数値または {"uniform": [lo, hi]} を要素に持つ配列を (low, high) に変換"""

    def split(entry, entry_path):
        if isinstance(entry, dict):
            bounds = entry.get("uniform")
            if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
                issues.append((entry_path, 'range entries must look like {"uniform": [lo, hi]}'))
                return 0.0, 0.0
            return float(bounds[0]), float(bounds[1])
        if isinstance(entry, (list, tuple)):
            pairs = [split(e, f"{entry_path}[{k}]") for k, e in enumerate(entry)]
            return [lo for lo, _ in pairs], [hi for _, hi in pairs]
        if isinstance(entry, bool) or not isinstance(entry, (int, float)):
            issues.append((entry_path, "must be a number or a uniform range"))
            return 0.0, 0.0
        return float(entry), float(entry)

    low, high = split(value, path)
    low, high = np.asarray(low, dtype=float), np.asarray(high, dtype=float)
    if low.ndim != ndim:
        issues.append((path, f"must be a {ndim}-dimensional array"))
        return None, None
    return low, high


def _build_laws(spec, path: str, issues) -> Tuple[OffspringLaw, ...]:
    laws = []
    if not isinstance(spec, list) or not spec:
        issues.append((path, "must be a nonempty list of laws, one per type"))
        return ()
    for i, law_spec in enumerate(spec):
        try:
            laws.append(OffspringLaw.from_points((z, prob) for z, prob in law_spec))
        except (TypeError, ValueError) as exc:
            issues.append((f"{path}[{i}]", str(exc)))
    return tuple(laws)


def _build_component(spec: Dict[str, Any], path: str, issues) -> EnvironmentComponent:
    try:
        if "laws" in spec:
            laws = _build_laws(spec["laws"], f"{path}.laws", issues)
            return EnvironmentComponent.from_laws(laws) if laws and len(laws) == len(spec["laws"]) else None
        if "fractional_linear" in spec:
            fl = spec["fractional_linear"]
            form = FractionalLinearForm(
                stall=fl.get("stall"), geometric=fl.get("geometric"), mixers=fl.get("mixers")
            )
            return EnvironmentComponent.from_fractional_linear(form)
        if "geometric_means" in spec:
            means = _float_array(spec["geometric_means"], f"{path}.geometric_means", issues, 2)
            if means is None:
                return None
            if means.shape[0] != means.shape[1] or np.any(means < 0):
                issues.append((f"{path}.geometric_means", "must be a square nonnegative matrix"))
                return None
            return EnvironmentComponent.from_fractional_linear(geometric_form_with_mean(means))
    except (TypeError, ValueError) as exc:
        issues.append((path, str(exc)))
        return None
    issues.append((path, 'needs one of "laws", "fractional_linear", "geometric_means"'))
    return None


def _check_weights(weights: Sequence[float], path: str, issues) -> bool:
    total = float(np.sum(weights))
    if any(w < 0 for w in weights):
        issues.append((path, "weights must be nonnegative"))
        return False
    if abs(total - 1.0) > 1e-12:
        issues.append((path, f"weights sum to {total:.12g}, expected 1"))
        return False
    return True


def build_scenario(spec: Dict[str, Any], path: str = "scenario") -> EnvironmentModel:
    """
    JSON 互換の辞書から環境モデルを構築

    Args:
        spec: {"preset": 名前} または {"kind": 種類, ...}
        path: エラーメッセージ用のフィールドパス

    Returns:
        EnvironmentModel

    Raises:
        ScenarioSpecError: 定義に誤りがある場合（全ての問題を列挙）
    """
    issues: List[Tuple[str, str]] = []
    if not isinstance(spec, dict):
        raise ScenarioSpecError([(path, "must be an object")])
    if "preset" in spec:
        name = spec["preset"]
        if name not in PRESET_SCENARIOS:
            raise ScenarioSpecError(
                [(f"{path}.preset", f"unknown preset {name!r}; available: {sorted(PRESET_SCENARIOS)}")]
            )
        model = build_scenario(PRESET_SCENARIOS[name], path=f"{path}<{name}>")
        return EnvironmentModel(
            kind=model.kind, p=model.p, atoms=model.atoms, weights=model.weights,
            families=model.families, parameters=model.parameters, name=name,
        )

    kind_name = spec.get("kind")
    kinds = {k.value: k for k in ModelKind}
    if kind_name not in kinds:
        raise ScenarioSpecError([(f"{path}.kind", f"must be one of {sorted(kinds)}")])
    kind = kinds[kind_name]
    name = spec.get("name", "")
    model = None

    try:
        if kind is ModelKind.FINITE_MIXTURE:
            components_spec = spec.get("components")
            if not isinstance(components_spec, list) or not components_spec:
                issues.append((f"{path}.components", "must be a nonempty list"))
            else:
                components, weights = [], []
                for k, comp_spec in enumerate(components_spec):
                    comp_path = f"{path}.components[{k}]"
                    if not isinstance(comp_spec, dict):
                        issues.append((comp_path, "must be an object"))
                        continue
                    weights.append(float(comp_spec.get("weight", 1.0 if len(components_spec) == 1 else -1)))
                    components.append(_build_component(comp_spec, comp_path, issues))
                weights_ok = _check_weights(weights, f"{path}.components[*].weight", issues)
                if weights_ok and all(c is not None for c in components):
                    if len({c.p for c in components}) != 1:
                        issues.append((f"{path}.components", "all components must share p"))
                    else:
                        model = finite_mixture(components, weights, name=name)

        elif kind is ModelKind.FRACTIONAL_LINEAR:
            sets_spec = spec.get("parameter_sets")
            if not isinstance(sets_spec, list) or not sets_spec:
                issues.append((f"{path}.parameter_sets", "must be a nonempty list"))
            else:
                families, weights = [], []
                for k, set_spec in enumerate(sets_spec):
                    set_path = f"{path}.parameter_sets[{k}]"
                    weight = float(set_spec.get("weight", 1.0 if len(sets_spec) == 1 else -1))
                    weights.append(weight)
                    stall = _range_array(set_spec.get("stall"), f"{set_path}.stall", issues, 1)
                    geometric = _range_array(set_spec.get("geometric"), f"{set_path}.geometric", issues, 1)
                    mixers = _range_array(set_spec.get("mixers"), f"{set_path}.mixers", issues, 2)
                    if any(part[0] is None for part in (stall, geometric, mixers)):
                        continue
                    try:
                        families.append(
                            FractionalLinearFamily(weight, *stall, *geometric, *mixers)
                        )
                    except ValueError as exc:
                        issues.append((set_path, str(exc)))
                if _check_weights(weights, f"{path}.parameter_sets[*].weight", issues) and not issues:
                    model = fractional_linear_model(families, name=name)

        elif kind is ModelKind.SCALAR_SYMMETRIC:
            delta = spec.get("delta")
            if isinstance(delta, bool) or not isinstance(delta, (int, float)) or delta <= 0:
                issues.append((f"{path}.delta", "must be a positive number"))
            else:
                model = scalar_symmetric(float(delta), name=name)

        elif kind is ModelKind.COMMON_LEFT_EIGENVECTOR:
            v = _float_array(spec.get("v"), f"{path}.v", issues, 1)
            eigenvalues = _float_array(spec.get("eigenvalues"), f"{path}.eigenvalues", issues, 1)
            weights = spec.get("eigenvalue_weights")
            if weights is not None and eigenvalues is not None:
                _check_weights(weights, f"{path}.eigenvalue_weights", issues)
            if v is not None and eigenvalues is not None and not issues:
                model = common_left_eigenvector(
                    v, eigenvalues, weights, spec.get("mixing", [0.0]), name=name
                )
    except (TypeError, ValueError) as exc:
        issues.append((path, str(exc)))

    if issues or model is None:
        raise ScenarioSpecError(issues or [(path, "could not build the scenario")])
    return model


def build_preset(name: str) -> EnvironmentModel:
    """名前付きプリセットからモデルを構築"""
    if name not in PRESET_SCENARIOS:
        raise ValueError(f"Unknown preset: {name}. Available: {sorted(PRESET_SCENARIOS)}")
    return build_scenario({"preset": name})


def list_presets() -> Dict[str, str]:
    return {name: spec.get("description", "") for name, spec in PRESET_SCENARIOS.items()}


__all__ = ["PRESET_SCENARIOS", "ScenarioSpecError", "build_scenario", "build_preset", "list_presets"]
