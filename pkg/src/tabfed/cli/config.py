"""Run configuration: nested sections loaded from YAML, with dotted overrides."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, get_type_hints

import yaml

from ..errors import ConfigurationError

OUTPUT_DIR_ENV = "TABFED_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "tabfed_runs"
SHIPPED_PROFILES = ("desk", "full")


@dataclass
class PartitionSpec:
    split_column: str | None = None  # the schema's split column when unset
    clients: int = 3


@dataclass
class ModelSpec:
    hidden_layers: int = 2
    hidden_width: int = 128
    time_embed_dim: int = 16
    activation: str = "relu"
    diffusion_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    embed_dim: int = 2
    train_embeddings: bool = True
    n_quantiles: int = 1000


@dataclass
class FederationSpec:
    rounds: int = 200
    client_steps: int = 20
    batch_size: int = 512
    clients_per_round: int | None = None
    seed: int = 0
    threads: int = 1
    snapshot_every: int = 100


@dataclass
class OptimizerSpec:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class EvaluationSpec:
    n_synth: int = 5000
    utility: bool = True
    label_column: str | None = None
    max_pairs: int = 10_000_000


@dataclass
class RunConfig:
    schema: str | None = None
    data: str | None = None
    output_dir: str | None = None
    missing_category: str | None = None
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    federation: FederationSpec = field(default_factory=FederationSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    evaluation: EvaluationSpec = field(default_factory=EvaluationSpec)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping | None) -> "RunConfig":
        return _build(cls, doc or {}, "")

    def with_overrides(self, assignments) -> "RunConfig":
        """Apply ``key=value`` strings, keys dotted (``federation.rounds=5``)."""
        doc = self.to_dict()
        for item in assignments or ():
            key, sep, raw = item.partition("=")
            if not sep or not key:
                raise ConfigurationError(f"override {item!r} is not of the form key=value")
            parts = key.strip().split(".")
            node = doc
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigurationError(f"unknown config section {key!r}")
                node = node[p]
            if parts[-1] not in node or isinstance(node[parts[-1]], dict):
                raise ConfigurationError(f"unknown config key {key!r}")
            node[parts[-1]] = _parse_scalar(raw.strip())
        return RunConfig.from_dict(doc)

    def validate(self) -> "RunConfig":
        m, f, o, e = self.model, self.federation, self.optimizer, self.evaluation
        checks = [
            (self.partition.clients >= 1, "partition.clients must be >= 1"),
            (m.hidden_layers >= 1 and m.hidden_width >= 1, "model needs a hidden layer of width >= 1"),
            (m.time_embed_dim >= 0 and m.time_embed_dim % 2 == 0, "model.time_embed_dim must be even"),
            (m.activation in ("relu", "silu"), f"unknown activation {m.activation!r}"),
            (m.diffusion_steps >= 2, "model.diffusion_steps must be >= 2"),
            (0 < m.beta_start <= m.beta_end < 1, "need 0 < beta_start <= beta_end < 1"),
            (m.embed_dim >= 1, "model.embed_dim must be >= 1"),
            (m.n_quantiles >= 2, "model.n_quantiles must be >= 2"),
            (f.rounds >= 1 and f.client_steps >= 1 and f.batch_size >= 1, "rounds, client_steps and batch_size must be >= 1"),
            (f.clients_per_round is None or f.clients_per_round >= 1, "clients_per_round must be >= 1"),
            (f.threads >= 1, "federation.threads must be >= 1"),
            (f.snapshot_every >= 0, "federation.snapshot_every must be >= 0 (0 disables)"),
            (o.lr > 0 and 0 <= o.beta1 < 1 and 0 <= o.beta2 < 1 and o.eps > 0, "invalid optimizer settings"),
            (e.n_synth >= 0, "evaluation.n_synth must be >= 0"),
            (e.max_pairs >= 1, "evaluation.max_pairs must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)
        return self

    def require_inputs(self) -> tuple[Path, Path]:
        """Schema and data paths, checked to exist."""
        paths = []
        for key in ("schema", "data"):
            value = getattr(self, key)
            if not value:
                raise ConfigurationError(f"config key {key!r} is not set")
            path = Path(value)
            if not path.is_file():
                raise ConfigurationError(f"{key} file {path} does not exist")
            paths.append(path)
        return paths[0], paths[1]

    def resolve_output_dir(self, override: str | None = None) -> Path:
        chosen = override or self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
        return Path(chosen)


def _parse_scalar(raw: str) -> Any:
    value = yaml.safe_load(raw) if raw else None
    if isinstance(value, str):
        # YAML 1.1 reads "1e-4" as a string
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _build(cls, doc: Mapping, prefix: str):
    if not isinstance(doc, Mapping):
        raise ConfigurationError(f"config section {prefix or '<root>'} must be a mapping")
    hints = get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(fields)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(prefix + k for k in sorted(unknown))}")
    kwargs = {}
    for name, value in doc.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value or {}, f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(value, hint, prefix + name)
    return cls(**kwargs)


def _coerce(value, hint, key: str):
    text = str(hint)
    optional = "None" in text
    if value is None:
        if optional:
            return None
        raise ConfigurationError(f"config key {key} may not be null")
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"config key {key} must be true or false")
        return value
    if hint is int or text.startswith("int"):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigurationError(f"config key {key} must be an integer, got {value!r}")
        return int(float(value))
    if hint is float:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"config key {key} must be a number, got {value!r}") from None
    return str(value)


def load_config(source: str | os.PathLike | None = None) -> RunConfig:
    """Load a YAML config file, or a shipped profile by name (``desk``, ``full``).

    ``None`` yields the built-in defaults (the desk profile's values).
    """
    if source is None:
        return RunConfig()
    if str(source) in SHIPPED_PROFILES:
        text = resources.files("tabfed.configs").joinpath(f"{source}.yaml").read_text(encoding="utf-8")
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} does not exist")
        text = path.read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {source}: {exc}") from exc
    return RunConfig.from_dict(doc)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False), encoding="utf-8")
