"""
Experiment configuration: JSON loading, validation and defaults
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..environment.models import EnvironmentModel, ModelKind
from ..environment.scenarios import ScenarioSpecError, build_scenario

COMMANDS = ("survival", "tau", "harmonic", "lyapunov", "conditions", "verify")

DEFAULT_N_GRID = tuple(2 ** k for k in range(6, 13))
DEFAULT_A_VALUES = (1.0, 2.0, 4.0, 8.0)

# コマンドごとのオプションとその既定値（None は実行時に決まる）
OPTION_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "survival": {"population_runs": 0, "population_max_n": 30, "cap": 10 ** 7, "split": False},
    "tau": {"sigma_batches": 20, "x_values": None},
    "harmonic": {"h_replicas": None, "fixed_k": 0, "fixed_k_n": 2000, "hat_series": False},
    "lyapunov": {"n": None, "burn_in": 100, "samples": 1000},
    "conditions": {
        "epsilon_grid": [0.1, 0.5, 1.0],
        "delta_grid": [0.05, 0.1, 0.5],
        "n": None,
        "replicas": None,
    },
    "verify": {"instances": 10000, "telescope_instances": 200},
}


class ConfigValidationError(ValueError):
    """設定の検証エラー（(フィールド, メッセージ) のリストを保持）"""

    def __init__(self, errors: Sequence[Tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("\n".join(f"{path}: {msg}" for path, msg in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """検証済みの実験設定"""
    command: str
    scenario: Dict[str, Any]
    model: EnvironmentModel = field(repr=False, compare=False)
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    replicas: int = 10000
    seed: int = 42
    type_index: int = 1
    start_x: Union[str, Tuple[float, ...]] = "uniform"
    a: float = 1.0
    a_values: Tuple[float, ...] = DEFAULT_A_VALUES
    workers: int = 1
    chunk_size: int = 500
    output_dir: str = "./results"
    options: Dict[str, Any] = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.model.p

    def to_dict(self) -> Dict[str, Any]:
        """マニフェストに書き出す設定のエコー"""
        return {
            "command": self.command,
            "scenario": self.scenario,
            "n_grid": list(self.n_grid),
            "replicas": self.replicas,
            "seed": self.seed,
            "type_index": self.type_index,
            "start": {
                "x": self.start_x if isinstance(self.start_x, str) else list(self.start_x),
                "a": self.a,
                "a_values": list(self.a_values),
            },
            "workers": self.workers,
            "chunk_size": self.chunk_size,
            "output_dir": self.output_dir,
            "options": self.options,
        }


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.number)) and not isinstance(value, bool) and math.isfinite(value)


def _positive_int(data, key, default, errors, minimum=1) -> int:
    value = data.get(key, default)
    if not _is_int(value) or value < minimum:
        errors.append((key, f"must be an integer >= {minimum}"))
        return default
    return int(value)


def _check_grid(value, errors) -> Tuple[int, ...]:
    if not isinstance(value, list) or not value:
        errors.append(("n_grid", "must be a nonempty list of positive integers"))
        return DEFAULT_N_GRID
    if not all(_is_int(n) and n >= 1 for n in value):
        errors.append(("n_grid", "must contain positive integers only"))
        return DEFAULT_N_GRID
    if any(b <= a for a, b in zip(value, value[1:])):
        errors.append(("n_grid", "must be strictly increasing"))
        return DEFAULT_N_GRID
    return tuple(int(n) for n in value)


def _check_point(x, path: str, model: Optional[EnvironmentModel], errors) -> Union[str, Tuple[float, ...]]:
    """開始点の指定（uniform / eigenvector / vertex:i / ベクトル）を検証"""
    if isinstance(x, list):
        if not x or not all(_is_number(v) and v >= 0 for v in x) or sum(x) <= 0:
            errors.append((path, "must be a nonnegative vector with positive sum"))
            return "uniform"
        x = tuple(float(v) for v in x)
        if model is not None and len(x) != model.p:
            errors.append((path, f"must have {model.p} coordinates"))
        return x
    if not isinstance(x, str) or not (x in ("uniform", "eigenvector") or x.startswith("vertex:")):
        errors.append((path, 'must be "uniform", "eigenvector", "vertex:<i>" or a vector'))
        return "uniform"
    if model is not None and x.startswith("vertex:"):
        index = x.split(":", 1)[1]
        if not index.isdigit() or not 1 <= int(index) <= model.p:
            errors.append((path, "type index out of range"))
    if model is not None and x == "eigenvector" and model.kind is not ModelKind.COMMON_LEFT_EIGENVECTOR:
        errors.append((path, "eigenvector needs a common_left_eigenvector scenario"))
    return x


def _check_start(value, errors) -> Tuple[Union[str, Tuple[float, ...]], float, Tuple[float, ...]]:
    if value is None:
        value = {}
    if not isinstance(value, dict):
        errors.append(("start", "must be an object"))
        return "uniform", 1.0, DEFAULT_A_VALUES
    x = value.get("x", "uniform")
    a = value.get("a", 1.0)
    if not _is_number(a) or a <= 0:
        errors.append(("start.a", "must be a positive number"))
        a = 1.0
    a_values = value.get("a_values", list(DEFAULT_A_VALUES))
    if not isinstance(a_values, list) or not a_values or not all(_is_number(v) and v > 0 for v in a_values):
        errors.append(("start.a_values", "must be a nonempty list of positive numbers"))
        a_values = list(DEFAULT_A_VALUES)
    return x, float(a), tuple(float(v) for v in a_values)


def _check_options(command: Optional[str], value, errors) -> Dict[str, Any]:
    if value is None:
        value = {}
    if not isinstance(value, dict):
        errors.append(("options", "must be an object"))
        return {}
    if command not in OPTION_DEFAULTS:
        return dict(value)
    defaults = OPTION_DEFAULTS[command]
    for key in value:
        if key not in defaults:
            errors.append((f"options.{key}", f"unknown option for {command}; known: {sorted(defaults)}"))
    merged = dict(defaults)
    merged.update({k: v for k, v in value.items() if k in defaults})
    return merged


def resolve_start(config: ExperimentConfig) -> np.ndarray:
    """start.x の指定を単体上の点に変換"""
    return resolve_point(config.start_x, config.model)


def resolve_point(x, model: EnvironmentModel) -> np.ndarray:
    """開始点の指定を単体上の点に変換"""
    p = model.p
    if isinstance(x, tuple):
        if len(x) != p:
            raise ValueError(f"start.x must have {p} coordinates")
        v = np.asarray(x, dtype=float)
        return v / v.sum()
    if x == "uniform":
        return np.full(p, 1.0 / p)
    if x == "eigenvector":
        if model.kind is not ModelKind.COMMON_LEFT_EIGENVECTOR:
            raise ValueError("start.x = eigenvector needs a common_left_eigenvector scenario")
        v = np.asarray(model.parameters["v"], dtype=float)
        return v / v.sum()
    i = int(x.split(":", 1)[1])
    if not 1 <= i <= p:
        raise ValueError("type index out of range")
    e = np.zeros(p)
    e[i - 1] = 1.0
    return e


def config_from_dict(data: Dict[str, Any], command: Optional[str] = None) -> ExperimentConfig:
    """
    辞書から設定を作成して検証

    Args:
        data: JSON から読み込んだ辞書
        command: CLI で指定されたコマンド（ファイルの値より優先）

    Raises:
        ConfigValidationError: すべての検証エラーをまとめて送出
    """
    errors: List[Tuple[str, str]] = []
    if not isinstance(data, dict):
        raise ConfigValidationError([("<root>", "configuration must be a JSON object")])

    command = command or data.get("command")
    if command not in COMMANDS:
        errors.append(("command", f"must be one of {list(COMMANDS)}"))

    model = None
    scenario = data.get("scenario")
    if scenario is None:
        errors.append(("scenario", "is required"))
    else:
        try:
            model = build_scenario(scenario, "scenario")
        except ScenarioSpecError as exc:
            errors.extend(exc.issues)

    n_grid = _check_grid(data.get("n_grid", list(DEFAULT_N_GRID)), errors)
    replicas = _positive_int(data, "replicas", 10000, errors)
    workers = _positive_int(data, "workers", 1, errors)
    chunk_size = _positive_int(data, "chunk_size", 500, errors)

    seed = data.get("seed", 42)
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        errors.append(("seed", "must be an unsigned 64-bit integer"))
        seed = 42

    type_index = data.get("type_index", 1)
    if not _is_int(type_index):
        errors.append(("type_index", "must be an integer"))
        type_index = 1
    elif model is not None and not 1 <= type_index <= model.p:
        errors.append(("type_index", f"type index out of range: {type_index} not in 1..{model.p}"))

    raw_x, a, a_values = _check_start(data.get("start"), errors)
    start_x = _check_point(raw_x, "start.x", model, errors)

    output_dir = data.get("output_dir", "./results")
    if not isinstance(output_dir, str) or not output_dir:
        errors.append(("output_dir", "must be a nonempty path"))
        output_dir = "./results"

    options = _check_options(command, data.get("options"), errors)
    if command == "tau" and options.get("x_values") is not None:
        specs = options["x_values"]
        if not isinstance(specs, list) or not specs:
            errors.append(("options.x_values", "must be a nonempty list of start points"))
        else:
            options["x_values"] = [
                _check_point(s, f"options.x_values[{i}]", model, errors) for i, s in enumerate(specs)
            ]

    known = {
        "command", "scenario", "n_grid", "replicas", "seed", "type_index", "start",
        "workers", "chunk_size", "output_dir", "options",
    }
    for key in data:
        if key not in known:
            errors.append((key, "unknown field"))

    if errors:
        raise ConfigValidationError(errors)
    return ExperimentConfig(
        command=command,
        scenario=scenario,
        model=model,
        n_grid=n_grid,
        replicas=replicas,
        seed=int(seed),
        type_index=int(type_index),
        start_x=start_x,
        a=a,
        a_values=a_values,
        workers=workers,
        chunk_size=chunk_size,
        output_dir=output_dir,
        options=options,
    )


def load_config(path: Union[str, Path], command: Optional[str] = None) -> ExperimentConfig:
    """
    JSON 設定ファイルを読み込んで検証

    Raises:
        ConfigValidationError: ファイルがない、構文エラー（行・列付き）、または検証エラー
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigValidationError([(str(path), f"cannot read configuration: {exc.strerror}")])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError([(str(path), f"line {exc.lineno}, column {exc.colno}: {exc.msg}")])
    return config_from_dict(data, command)


def with_overrides(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    replicas: Optional[int] = None,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """CLI フラグで上書きした設定"""
    errors = []
    changes: Dict[str, Any] = {}
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            errors.append(("--seed", "must be an unsigned 64-bit integer"))
        changes["seed"] = int(seed)
    if replicas is not None:
        if replicas < 1:
            errors.append(("--replicas", "must be at least 1"))
        changes["replicas"] = int(replicas)
    if workers is not None:
        if workers < 1:
            errors.append(("--workers", "must be at least 1"))
        changes["workers"] = int(workers)
    if output_dir is not None:
        changes["output_dir"] = str(output_dir)
    if errors:
        raise ConfigValidationError(errors)
    return dataclasses.replace(config, **changes)


__all__ = [
    "COMMANDS",
    "DEFAULT_N_GRID",
    "OPTION_DEFAULTS",
    "ConfigValidationError",
    "ExperimentConfig",
    "config_from_dict",
    "load_config",
    "resolve_point",
    "resolve_start",
    "with_overrides",
]
