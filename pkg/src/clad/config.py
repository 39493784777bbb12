"""Run configuration: flat ``key = value`` files overridden by CLI flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from clad.errors import ConfigError
from clad.losses import LossConfig
from clad.model import ModelConfig
from clad.optim import TrainConfig


@dataclass
class RunConfig:
    data: str | None = None
    mode: str = "clad"
    loss: str | None = None
    label_column: str = "Label"
    benign_label: str = "BENIGN"
    zero_day: list[str] = field(default_factory=list)
    manifest: str | None = None
    train_fraction: float = 0.5
    split_seed: int | None = None
    holdout_validation: bool = False
    clamp: float = 10.0
    epochs: int = 200
    warmup_epochs: int = 20
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 128
    seed: int = 0
    d_model: int = 64
    depth: int = 3
    f_o: int = 16
    dropout: float = 0.0
    margin: float = 1.0
    squared: bool = True
    alpha: float = 0.5
    temperature: float = 0.1

    def validate(self) -> RunConfig:
        if self.mode not in ("clad", "closr"):
            raise ConfigError(f"mode must be clad or closr, got {self.mode!r}")
        if self.mode == "closr" and self.loss not in (None, "closr"):
            raise ConfigError("closr mode trains only the closr loss")
        if self.mode == "clad" and self.loss == "closr":
            raise ConfigError("use --mode closr for the closr loss")
        self.train_config()
        self.loss_config()
        self.model_config(1, 1)
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        return self

    @property
    def loss_kind(self) -> str:
        return self.loss or self.mode

    @property
    def effective_split_seed(self) -> int:
        return self.seed if self.split_seed is None else self.split_seed

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            warmup_epochs=self.warmup_epochs,
            base_lr=self.base_lr,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(self.loss_kind, self.margin, self.squared, self.alpha, self.temperature)

    def model_config(self, f: int, n_heads: int) -> ModelConfig:
        if self.loss_kind == "bce":
            return ModelConfig(f, self.d_model, self.depth, 1, 1, self.dropout, self.seed, normalize=False)
        return ModelConfig(f, self.d_model, self.depth, self.f_o, n_heads, self.dropout, self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw: str) -> Any:
    """Parse a textual value into the type declared for ``key``."""
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = str(_TYPES[key])
    text = raw.strip()
    try:
        if kind.startswith("list"):
            return [s.strip() for s in text.split(",") if s.strip()]
        if "None" in kind and text.lower() in ("", "none", "null"):
            return None
        if kind.startswith("bool"):
            if text.lower() in ("true", "1", "yes", "on"):
                return True
            if text.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = coerce(key, value)
    return out


def resolve(config_path: str | None, overrides: dict) -> RunConfig:
    """Defaults, then the config file, then explicit command-line values."""
    values = read_config_file(config_path) if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(values).validate()
