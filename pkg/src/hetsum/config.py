"""Training configuration and the flat ``key = value`` config format.

One setting per line, ``#`` starts a comment. Values are parsed by the type
of the matching :class:`TrainConfig` field: integers, floats, booleans
(``true``/``false``), strings, comma-separated integer lists, and ``none`` for
optional fields. Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

PROFILE_DIR = Path(__file__).with_name("profiles")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # optimisation
    learning_rate: float = 5e-4
    batch_size: int = 32
    patience_epochs: int = 3
    max_epochs: int = 50
    seed: int = 0
    workers: int = 1
    # graph / text
    mode: str = "HSG"
    vocab_limit: int = 50000
    filter_fraction: float = 0.1
    edge_buckets: int = 10
    max_sentences: int = 50
    max_tokens_multidoc: int = 500
    oracle_max_select: int = 3
    # dimensions
    d_w: int = 300
    d_s: int = 128
    d_e: int = 50
    d_h: int = 64
    heads: int = 8
    ffn_inner: int = 512
    cnn_widths: tuple = (3, 4, 5)
    cnn_filters: int = 50
    # iterative updating
    max_iterations: int = 1
    t_override: Optional[int] = None
    leaky_slope: float = 0.2
    attention_activation: str = "elu"
    layer_norm: bool = False
    # embeddings
    embedding_path: str = ""
    freeze_embeddings: bool = False
    embedding_init_std: float = 0.1
    # decoding / evaluation
    select_k: int = 3
    use_tri_blocking: bool = False
    metric: str = "f1_rouge"
    min_bucket_size: int = 100
    # ablations
    no_edge_feature: bool = False
    no_residual_concat_variant: bool = False
    no_word_filter: bool = False
    no_bilstm: bool = False

    def __post_init__(self):
        self.cnn_widths = tuple(int(w) for w in self.cnn_widths)
        self.validate()

    @property
    def iterations(self) -> int:
        return self.max_iterations if self.t_override is None else self.t_override

    @property
    def effective_filter_fraction(self) -> float:
        return 0.0 if self.no_word_filter else self.filter_fraction

    def validate(self) -> None:
        positive = ["batch_size", "max_epochs", "vocab_limit", "edge_buckets", "max_sentences",
                    "max_tokens_multidoc", "oracle_max_select", "d_w", "d_s", "d_e", "d_h", "heads",
                    "ffn_inner", "cnn_filters", "select_k", "workers", "min_bucket_size"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.patience_epochs < 1:
            raise ConfigError("patience_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.mode not in ("HSG", "HDSG"):
            raise ConfigError(f"mode must be HSG or HDSG, got {self.mode!r}")
        if self.d_h % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide d_h ({self.d_h})")
        if not self.no_bilstm and self.d_s % 4:
            raise ConfigError("d_s must be divisible by 4 (half CNN, half BiLSTM in two directions)")
        if not self.cnn_widths or min(self.cnn_widths) < 1:
            raise ConfigError("cnn_widths must be a nonempty list of positive widths")
        if self.max_iterations < 0 or (self.t_override is not None and self.t_override < 0):
            raise ConfigError("iteration counts must be >= 0")
        if not 0.0 <= self.filter_fraction < 1.0:
            raise ConfigError("filter_fraction must lie in [0, 1)")
        if self.attention_activation not in ("elu", "relu", "identity"):
            raise ConfigError(f"unknown attention_activation {self.attention_activation!r}")
        if self.metric not in ("f1_rouge", "limited_length_recall"):
            raise ConfigError(f"unknown metric {self.metric!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cnn_widths"] = list(self.cnn_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def dump(self) -> str:
        return "\n".join(f"{k} = {format_value(v)}" for k, v in self.to_dict().items()) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def parse_value(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "Optional[int]":
            return None if raw.lower() == "none" else int(raw)
        if kind == "bool":
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key} ({kind}): {raw!r}") from None


def parse_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, raw)
    return values


def resolve_config_path(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    profile = PROFILE_DIR / f"{name_or_path}.cfg"
    if profile.exists():
        return profile
    raise ConfigError(f"config {name_or_path!r} not found (neither a file nor a shipped profile)")


def load_config(name_or_path=None, overrides: Optional[list] = None) -> TrainConfig:
    """Load a config file or shipped profile, then apply ``key=value`` overrides."""
    values: dict = {}
    if name_or_path is not None:
        path = resolve_config_path(name_or_path)
        values.update(parse_text(path.read_text(encoding="utf-8"), str(path)))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        values[key.strip()] = parse_value(key.strip(), raw)
    return TrainConfig(**values)


def profile(name: str, **changes) -> TrainConfig:
    cfg = load_config(name)
    return cfg.replace(**changes) if changes else cfg
