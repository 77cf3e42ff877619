"""
Configuration, random streams, parallel execution and serialization
"""

from .config import (
    COMMANDS,
    DEFAULT_N_GRID,
    OPTION_DEFAULTS,
    ConfigValidationError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    resolve_point,
    resolve_start,
    with_overrides,
)
from .parallel import NAMESPACES, RandomStreams, ReplicaExecutor, batch_means_stderr, concat_chunks
from .serialization import FLOAT_FORMAT, ResultSerializer, RunManifest, sha256_of, to_jsonable

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
    "NAMESPACES",
    "RandomStreams",
    "ReplicaExecutor",
    "batch_means_stderr",
    "concat_chunks",
    "FLOAT_FORMAT",
    "ResultSerializer",
    "RunManifest",
    "sha256_of",
    "to_jsonable",
]
