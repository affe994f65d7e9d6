"""Model and training configuration, plus named random sub-streams."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

CL_STRATEGIES = ("CL_t", "CL_s", "off")

# Every source of randomness draws from its own stream so that enabling one
# branch (e.g. contrastive dropout) never shifts the draws of another.
_STREAMS = {"init": 0, "shuffle": 1, "dropout": 2, "gumbel": 3, "cl_dropout": 4, "split": 5}


def named_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAMS[name],)))


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    d_model: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    vocab_size: int = 8000
    max_src_len: int = 256
    max_tgt_len: int = 128
    dropout_rate: float = 0.1

    def __post_init__(self):
        for name in ("num_layers", "d_model", "num_heads", "ffn_dim", "vocab_size",
                     "max_src_len", "max_tgt_len"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.d_model % self.num_heads:
            raise ConfigError("d_model must be divisible by num_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    lambda_qg: float = 1.0
    lambda_cl: float = 0.1
    lambda_ar: float = 0.1
    learning_rate: float = 5e-5
    epochs: int = 5
    batch_size: int = 16
    tau_cl: float = 0.3
    tau_gs: float = 1.0
    cl_strategy: str = "CL_t"
    ar_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda_qg", "lambda_cl", "lambda_ar"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.tau_cl <= 0:
            raise ConfigError("tau_cl must be positive")
        if self.tau_gs <= 0:
            raise ConfigError("tau_gs must be positive")
        if self.cl_strategy not in CL_STRATEGIES:
            raise ConfigError(f"cl_strategy must be one of {CL_STRATEGIES}")

    @property
    def cl_active(self) -> bool:
        return self.cl_strategy != "off" and self.lambda_cl > 0

    def effective(self) -> "TrainConfig":
        """The objective actually optimised: zero-weight branches are reported as disabled."""
        return dataclasses.replace(
            self,
            cl_strategy=self.cl_strategy if self.lambda_cl > 0 else "off",
            ar_enabled=self.ar_enabled and self.lambda_ar > 0,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _from_dict(cls, data: dict, section: str, strict: bool):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown field {section}.{unknown[0]}")
    if strict:
        missing = [n for n in names if n not in data]
        if missing:
            raise ConfigError(f"missing field {section}.{missing[0]}")
    kwargs = {}
    for name, value in data.items():
        default = names[name].default
        expected = type(default)
        if expected is bool:
            ok = isinstance(value, bool)
        elif expected is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        else:
            ok = isinstance(value, expected) and not isinstance(value, bool)
        if not ok:
            raise ConfigError(f"field {section}.{name} must be of type {expected.__name__}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def model_config_from_dict(data: dict, strict: bool = False) -> ModelConfig:
    return _from_dict(ModelConfig, data, "model", strict)


def train_config_from_dict(data: dict, strict: bool = False) -> TrainConfig:
    return _from_dict(TrainConfig, data, "train", strict)
