"""Model and training configuration.

Configs live in flat ``key = value`` text files; CLI flags override file
values. Serialization round-trips exactly, and the training manifest embeds
the consumed config verbatim so no hidden default can affect a result
silently.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import (
    EVENT_MODES,
    FUSION_MODES,
    EtmaConfig,
    FusionNetwork,
    StreamConfig,
    desk_event_config,
    desk_rgb_config,
    paper_event_config,
    paper_rgb_config,
)


@dataclass(frozen=True)
class ModelConfig:
    arch_preset: str = "desk"  # desk | paper
    fusion_mode: str = "renet"
    event_mode: str = "etma"  # etma | accumulate | single
    ca_enabled: bool = True
    sa_enabled: bool = True
    input_size: int = 96
    k_frames: int = 3
    n_classes: int = 1
    clip_count: int = 10
    etma_channels: int = 8
    pool_kernels: tuple[int, int, int] = (2, 4, 8)
    head_channels: tuple[int, int] = (64, 32)
    batch_size: int = 8
    epochs: int = 30
    lr: float = 5e-4
    lr_decay_epochs: tuple[int, ...] = (10, 15)
    lr_decay_factor: float = 0.1
    aug_enabled: bool = True
    aug_brightness: float = 0.2
    aug_contrast: float = 0.2
    aug_scale_min: float = 0.8
    aug_scale_max: float = 1.2
    aug_translate: float = 0.1
    decode_threshold: float = 0.3
    decode_top_k: int = 50
    map_iou: float = 0.5
    eval_batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.arch_preset not in ("desk", "paper"):
            raise ConfigError(f"arch_preset must be desk or paper, got {self.arch_preset!r}")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.event_mode not in EVENT_MODES:
            raise ConfigError(f"event_mode must be one of {EVENT_MODES}, got {self.event_mode!r}")
        if self.input_size % 16:
            raise ConfigError("input_size must be divisible by 16")
        if self.k_frames < 1:
            raise ConfigError("k_frames must be >= 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")

    # -- serialization -----------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        values = parse_flat_config(text)
        return cls.from_dict(values)

    @classmethod
    def from_file(cls, path: str | Path) -> "ModelConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    @classmethod
    def from_dict(cls, values: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, raw in values.items():
            if key not in by_name:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _parse_value(key, raw, getattr(cls, key))
        return cls(**kwargs)

    def with_overrides(self, overrides: dict[str, str]) -> "ModelConfig":
        if not overrides:
            return self
        updates = {}
        by_name = {f.name for f in fields(self)}
        for key, raw in overrides.items():
            if key not in by_name:
                raise ConfigError(f"unknown config key {key!r}")
            updates[key] = _parse_value(key, raw, getattr(type(self), key))
        return replace(self, **updates)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # -- derived pieces ------------------------------------------------------------

    def stream_configs(self) -> tuple[StreamConfig, StreamConfig]:
        if self.arch_preset == "paper":
            return paper_rgb_config(), paper_event_config()
        return desk_rgb_config(), desk_event_config()

    def build_model(self) -> FusionNetwork:
        rgb_cfg, ev_cfg = self.stream_configs()
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x11111]))
        return FusionNetwork(
            rng,
            fusion_mode=self.fusion_mode,
            event_mode=self.event_mode,
            rgb_config=rgb_cfg,
            event_config=ev_cfg,
            k_frames=self.k_frames,
            n_classes=self.n_classes,
            ca_enabled=self.ca_enabled,
            sa_enabled=self.sa_enabled,
            etma_config=EtmaConfig(channels=ev_cfg.stem_channels, pool_kernels=self.pool_kernels),
            head_trunk=self.head_channels,
            clip_count=self.clip_count,
        )


def parse_flat_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks ignored."""
    values: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        values[key.strip()] = raw.strip()
    return values


def _parse_value(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.split(",") if p.strip()]
            elem = default[0] if default else 0
            return tuple(type(elem)(p.strip()) for p in parts)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc
