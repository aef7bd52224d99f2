"""Run configuration: defaults, presets, file parsing and validation."""

from __future__ import annotations

import dataclasses
import json
import logging
import types
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, TypeVar

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)

T = TypeVar("T")

VIEW_SETS = ("full", "cross_inner", "cross_inter", "cross", "uni")
ESTIMATORS = ("full", "cons", "stab")
PRECISIONS = ("float32", "float64")

DEFAULT_SEED = 0

# (learning_rate, gamma, epochs) selected per benchmark dataset
PRESETS: dict[str, dict[str, Any]] = {
    "citeseer": {"learning_rate": 2e-4, "gamma": 5e-3, "epochs": 2},
    "pubmed": {"learning_rate": 2e-5, "gamma": 1e-3, "epochs": 2},
    "history": {"learning_rate": 2e-5, "gamma": 0.5, "epochs": 2},
    "photo": {"learning_rate": 5e-5, "gamma": 1e-3, "epochs": 3},
    "computers": {"learning_rate": 2e-5, "gamma": 1e-2, "epochs": 3},
    "children": {"learning_rate": 5e-5, "gamma": 0.5, "epochs": 2},
    "arxiv": {"learning_rate": 1e-5, "gamma": 1e-2, "epochs": 2},
    "citationv8": {"learning_rate": 2e-5, "gamma": 0.5, "epochs": 2},
    # full-size text encoder shape; combine with a dataset preset via overrides
    "paper-encoder": {"text_layers": 12, "text_width": 512, "text_heads": 8},
}


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a training/scoring run.

    Field names are the keys accepted in config.json.
    """

    tau: float = 0.07
    gamma: float = 0.01
    rounds: int = 256
    batch_size: int = 128
    learning_rate: float = 2e-4
    epochs: int = 2
    embed_dim: int = 128
    # text encoder shape
    text_layers: int = 2
    text_width: int = 64
    text_heads: int = 4
    text_ff_mult: int = 4
    max_len: int = 64
    vocab_size: int = 8192
    # graph encoder
    graph_layers: int = 2
    d_in: int = 768
    max_neighbors: int | None = None
    # contrastive views and scoring
    views: str = "full"
    symmetric_views: bool = False
    score_uniform_weights: bool = False
    score_entropy: bool = True
    estimator: str = "full"
    score_batch_size: int | None = None
    precision: str = "float32"
    # anomaly injection
    anomaly_rate: float = 0.04
    anomaly_count: int | None = None
    candidate_k: int = 50
    clique_size: int = 15
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """Check cross-field invariants.

        Raises:
            ConfigError: On the first violated invariant
        """
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.score_batch_size is not None and self.score_batch_size < 2:
            raise ConfigError(f"score_batch_size must be >= 2, got {self.score_batch_size}")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        for name in ("embed_dim", "text_layers", "text_width", "text_heads",
                     "text_ff_mult", "max_len", "graph_layers", "d_in"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.vocab_size < 4:
            raise ConfigError(f"vocab_size must be >= 4, got {self.vocab_size}")
        if self.text_width % self.text_heads:
            raise ConfigError(
                f"text_width ({self.text_width}) must be divisible by text_heads ({self.text_heads})"
            )
        if self.max_neighbors is not None and self.max_neighbors < 1:
            raise ConfigError(f"max_neighbors must be >= 1, got {self.max_neighbors}")
        if self.views not in VIEW_SETS:
            raise ConfigError(f"views must be one of {VIEW_SETS}, got {self.views!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")
        if not 0 <= self.anomaly_rate <= 1:
            raise ConfigError(f"anomaly_rate must lie in [0, 1], got {self.anomaly_rate}")
        if self.anomaly_count is not None and (self.anomaly_count < 0 or self.anomaly_count % 4):
            raise ConfigError(
                f"anomaly_count must be a nonnegative multiple of 4, got {self.anomaly_count}"
            )
        if self.candidate_k < 1:
            raise ConfigError(f"candidate_k must be >= 1, got {self.candidate_k}")
        if self.clique_size < 2:
            raise ConfigError(f"clique_size must be >= 2, got {self.clique_size}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def scoring_batch_size(self) -> int:
        return self.score_batch_size or self.batch_size

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _coerce(value: Any, annotation: Any, key: str, source: str) -> Any:
    """Coerce a parsed value to a dataclass field type."""
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], key, source)
    try:
        if annotation is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ValueError(f"expected a boolean, got {value!r}")
        if annotation is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(f"expected an integer, got {value!r}")
            return int(value)
        if annotation is float:
            if isinstance(value, bool):
                raise ValueError(f"expected a number, got {value!r}")
            return float(value)
        if annotation is str:
            if not isinstance(value, str):
                raise ValueError(f"expected a string, got {value!r}")
            return value
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for '{key}' in {source}: {e}") from e
    return value


def build_dataclass(cls: type[T], data: dict[str, Any], source: str, base: T | None = None) -> T:
    """Instantiate a config dataclass from a mapping with strict keys.

    Args:
        cls: Dataclass type to build
        data: Parsed key/value pairs
        source: Description of where the data came from (for messages)
        base: Optional instance supplying values for keys absent from data

    Raises:
        ConfigError: On unknown keys, uncoercible values or failed validation
    """
    # base values are already typed; only incoming keys are coerced
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"Unknown key(s) in {source}: {', '.join(unknown)}")

    hints = typing.get_type_hints(cls)
    values = dataclasses.asdict(base) if base is not None else {}
    for key, value in data.items():
        values[key] = _coerce(value, hints[key], key, source)
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid configuration in {source}: {e}") from e


def read_mapping(path: Path) -> dict[str, Any]:
    """Read a JSON or YAML file holding a single mapping.

    Raises:
        ConfigError: If the file cannot be parsed or is not a mapping
    """
    path = Path(path)
    try:
        content = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e

    try:
        if path.suffix in (".yaml", ".yml"):
            data = yaml.safe_load(content) or {}
        else:
            data = json.loads(content) if content.strip() else {}
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"Invalid config file {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    return data


def load_config(
    path: Path | None = None,
    preset: str | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """Resolve a RunConfig from defaults, an optional preset, a file and overrides.

    Later sources win: defaults < preset < file < overrides.
    """
    config = RunConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset '{preset}'. Available: {', '.join(sorted(PRESETS))}")
        config = build_dataclass(RunConfig, PRESETS[preset], f"preset '{preset}'", base=config)
    if path is not None:
        config = build_dataclass(RunConfig, read_mapping(path), str(path), base=config)
    if overrides:
        config = build_dataclass(RunConfig, overrides, "command-line overrides", base=config)
    logger.debug(f"Config resolved from preset={preset}, file={path}, overrides={sorted(overrides or {})}")
    return config


def log_config(config: RunConfig, explicit_seed: bool = True) -> None:
    """Log the seed and the full resolved config before a command acts on it."""
    if not explicit_seed:
        logger.info(f"No --seed given, using seed {config.seed}")
    logger.info(f"Seed: {config.seed}")
    logger.info(f"Resolved config: {json.dumps(config.to_dict(), sort_keys=True)}")


def save_config(config: RunConfig, path: Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
