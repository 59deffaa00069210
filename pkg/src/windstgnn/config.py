"""Hyperparameter dataclasses and the flat ``key = value`` run-config file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgcrnConfig:
    layers: int = 2
    hidden: int = 64
    embed_dim: int = 10
    input_dim: int = 6
    history: int = 144
    horizon: int = 288

    def __post_init__(self):
        _positive(self)


@dataclass(frozen=True)
class MtgnnConfig:
    blocks: int = 3
    hidden: int = 32
    skip_dim: int = 64
    prop_depth: int = 2
    beta: float = 0.05
    dilation_factor: int = 2
    kernel_sizes: tuple[int, ...] = (2, 3, 6, 7)
    input_dim: int = 6
    history: int = 144
    horizon: int = 288

    def __post_init__(self):
        _positive(self, skip=("prop_depth", "beta"))
        if self.prop_depth < 0 or not 0.0 <= self.beta <= 1.0:
            raise ConfigError("need prop_depth >= 0 and beta in [0, 1]")
        if self.hidden % len(self.kernel_sizes):
            raise ConfigError(
                f"hidden={self.hidden} not divisible by {len(self.kernel_sizes)} inception branches"
            )

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(self.dilation_factor**b for b in range(self.blocks))

    @property
    def receptive_field(self) -> int:
        return 1 + (max(self.kernel_sizes) - 1) * sum(self.dilations)


@dataclass(frozen=True)
class GraphConfig:
    neighbours: int = 5
    eps: float = 0.8
    dtw_band: int | None = None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 30
    clip_norm: float = 5.0
    huber_delta: float = 5.0
    seed: int = 0
    train_stride: int = 1
    eval_stride: int | None = None  # None: one horizon
    augment_prob: float = 0.5

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.clip_norm <= 0:
            raise ConfigError("lr, batch_size, clip_norm must be positive and epochs >= 0")
        if self.huber_delta <= 0 or self.train_stride < 1:
            raise ConfigError("huber_delta and train_stride must be positive")
        if not 0.0 <= self.augment_prob <= 1.0:
            raise ConfigError("augment_prob must lie in [0, 1]")


def _positive(cfg, skip=()) -> None:
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in skip or isinstance(v, tuple):
            continue
        if v <= 0:
            raise ConfigError(f"{type(cfg).__name__}.{f.name} must be positive, got {v}")


@dataclass(frozen=True)
class RunConfig:
    """Everything the CLI needs; ``history``/``horizon`` feed both models."""

    history: int = 144
    horizon: int = 288
    train: TrainConfig = field(default_factory=TrainConfig)
    agcrn: AgcrnConfig = field(default_factory=AgcrnConfig)
    mtgnn: MtgnnConfig = field(default_factory=MtgnnConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)

    def __post_init__(self):
        for name in ("agcrn", "mtgnn"):
            sub = getattr(self, name)
            if (sub.history, sub.horizon) != (self.history, self.horizon):
                object.__setattr__(
                    self, name, dataclasses.replace(sub, history=self.history, horizon=self.horizon)
                )

    def with_overrides(self, values: dict[str, Any]) -> "RunConfig":
        return from_flat({**to_flat(self), **values})


_SECTIONS = ("train", "agcrn", "mtgnn", "graph")


def to_flat(cfg: RunConfig) -> dict[str, Any]:
    out: dict[str, Any] = {"history": cfg.history, "horizon": cfg.horizon}
    for sec in _SECTIONS:
        for f in dataclasses.fields(getattr(cfg, sec)):
            if f.name in ("history", "horizon"):
                continue
            out[f"{sec}.{f.name}"] = getattr(getattr(cfg, sec), f.name)
    return out


def _coerce(raw: Any, default: Any, key: str) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.strip("()").split(",") if x.strip())
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if default is None:
            if text.lower() in ("", "none"):
                return None
            return int(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def from_flat(values: dict[str, Any]) -> RunConfig:
    base = to_flat(RunConfig())
    unknown = sorted(set(values) - set(base))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged = {k: _coerce(values.get(k, v), v, k) for k, v in base.items()}
    sections: dict[str, dict[str, Any]] = {sec: {} for sec in _SECTIONS}
    for key, v in merged.items():
        if "." in key:
            sec, name = key.split(".", 1)
            sections[sec][name] = v
    return RunConfig(
        history=merged["history"],
        horizon=merged["horizon"],
        train=TrainConfig(**sections["train"]),
        agcrn=AgcrnConfig(**sections["agcrn"], history=merged["history"], horizon=merged["horizon"]),
        mtgnn=MtgnnConfig(**sections["mtgnn"], history=merged["history"], horizon=merged["horizon"]),
        graph=GraphConfig(**sections["graph"]),
    )


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    values: dict[str, Any] = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return from_flat(values)


def dump_config(cfg: RunConfig) -> str:
    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        return "none" if v is None else str(v)

    return "".join(f"{k} = {fmt(v)}\n" for k, v in to_flat(cfg).items())
