from __future__ import annotations

import json
import os
import re
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .attention.sparse import DEFAULT_ALPHAS, sparsity_levels, validate_alphas
from .errors import ConfigurationError
from .tensor.core import Precision

_ENV_PATTERN = re.compile(r"\$\{([^}]+)\}")


def _resolve_env_vars(value: Any) -> Any:
    if isinstance(value, str):
        return _ENV_PATTERN.sub(
            lambda m: os.environ.get(m.group(1), m.group(0)), value
        )
    if isinstance(value, dict):
        return {k: _resolve_env_vars(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_resolve_env_vars(v) for v in value]
    return value


def _deep_update(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    patch_size: int = 11
    pca_components: int = 30
    hsi_stem_filters: int = 8
    hsi_stem_kernel: int = 3
    aux_stem_filters: int = 16
    aux_stem_kernel: int = 3
    token_dim: int = 64
    alphas: list[float] = list(DEFAULT_ALPHAS)
    stb_depth: int = 3
    allow_depth_override: bool = False
    ffn_multiplier: int = 2
    n_classes: int = 6
    positional_embedding: bool = False
    paper_literal_eq8: bool = False
    ln_eps: float = 1e-5
    precision: Precision = Precision.STANDARD
    seed: int = 7

    @property
    def n_tokens(self) -> int:
        # Both stems use "same" padding, so every pixel of the patch becomes a token.
        return self.patch_size * self.patch_size

    @field_validator("patch_size")
    @classmethod
    def _odd_patch(cls, v: int) -> int:
        if v < 1 or v % 2 == 0:
            raise ValueError(f"patch_size must be a positive odd integer, got {v}")
        return v

    @field_validator(
        "pca_components", "hsi_stem_filters", "hsi_stem_kernel", "aux_stem_filters",
        "aux_stem_kernel", "token_dim", "ffn_multiplier",
    )
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"must be >= 1, got {v}")
        return v

    @field_validator("n_classes")
    @classmethod
    def _classes(cls, v: int) -> int:
        if v < 2:
            raise ValueError(f"need at least 2 classes, got {v}")
        return v

    @model_validator(mode="after")
    def _check_architecture(self) -> "ModelConfig":
        if self.stb_depth != 3 and not self.allow_depth_override:
            raise ValueError(f"stb_depth is fixed at 3 (got {self.stb_depth}); set allow_depth_override to change it")
        if self.stb_depth < 1:
            raise ValueError("stb_depth must be >= 1")
        try:
            validate_alphas(self.alphas)
            sparsity_levels(self.n_tokens, self.alphas)
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from exc
        return self


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    train_fraction: float = 0.1
    ablate_aux: bool = False
    eval_workers: int = 1
    checkpoint_path: str = ""
    history_path: str = ""
    precision: Precision = Precision.STANDARD
    seed: int = 7

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0.0 < self.train_fraction <= 0.9:
            raise ValueError(f"train_fraction must lie in (0, 0.9], got {self.train_fraction}")
        return self


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_classes: int = 6
    height: int = 64
    width: int = 64
    bands: int = 32
    aux_channels: int = 2
    noise: float = 0.05
    seed: int = 7


class BenchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_tokens: int = 256
    width: int = 64
    iters: int = 10
    warmup: int = 3


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="SFNET_", env_nested_delimiter="__", extra="forbid")

    seed: int | None = None
    precision: Precision | None = None
    log_level: str = "info"
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)

    @model_validator(mode="after")
    def _propagate_globals(self) -> "Settings":
        if self.seed is not None:
            self.model.seed = self.seed
            self.train.seed = self.seed
            self.synth.seed = self.seed
        if self.precision is not None:
            self.model.precision = self.precision
            self.train.precision = self.precision
        return self

    @classmethod
    def from_file(cls, path: str) -> "Settings":
        with open(path) as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as exc:
                raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"config {path} must hold a mapping at the top level")
        return cls.build(_resolve_env_vars(data))

    @classmethod
    def build(cls, data: dict[str, Any]) -> "Settings":
        try:
            return cls(**data)
        except ValidationError as exc:
            raise ConfigurationError(_describe(exc)) from exc

    def merged(self, overrides: dict[str, Any]) -> "Settings":
        data = self.model_dump(mode="json")
        return type(self).build(_deep_update(data, overrides))

    def effective_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "invalid configuration: " + "; ".join(parts)
