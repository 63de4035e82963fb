"""Plain-text key=value run configuration.

One key per line, ``#`` comments allowed.  Unknown or duplicate keys are
rejected with the offending key and line number so config typos surface
immediately.
"""

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .arch import BlockSpec, NetworkSpec, WidthMode
from .errors import ConfigError
from .optim import AdamConfig, NesterovConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # architecture
    scale: int
    interval: int
    width_mode: str
    block_widths: tuple
    classes: int
    droppath_rate: float = 0.0
    dropout_rate: float = 0.0
    l2_lambda: float = 0.0
    # training
    optimizer: str = "adam"
    epochs: int = 40
    batch_size: int = 128
    seed: int = 0
    learning_rate: float = None  # overrides the optimizer default / schedule
    schedule_profile: str = "cifar"
    pathwise: bool = False
    pathwise_cycles: int = 2
    augment: bool = True
    # data
    dataset: str = "cifar10"  # cifar10 | cifar100 | synthetic | gratings
    train_subset: int = 0  # 0 keeps everything
    eval_subset: int = 0
    track_paths: tuple = ()


REQUIRED_KEYS = ("scale", "interval", "width_mode", "block_widths", "classes")


def _parse_bool(value):
    lowered = value.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_widths(value):
    return tuple(int(part) for part in value.split(","))


def _parse_track_paths(value):
    if not value.strip():
        return ()
    return tuple(tuple(int(x) for x in group.split(","))
                 for group in value.split(";"))


_PARSERS = {
    "scale": int, "interval": int, "classes": int, "epochs": int,
    "batch_size": int, "seed": int, "pathwise_cycles": int,
    "train_subset": int, "eval_subset": int,
    "droppath_rate": float, "dropout_rate": float, "l2_lambda": float,
    "learning_rate": float,
    "width_mode": str, "optimizer": str, "schedule_profile": str, "dataset": str,
    "pathwise": _parse_bool, "augment": _parse_bool,
    "block_widths": _parse_widths, "track_paths": _parse_track_paths,
}


def parse_config_text(text, source="<config>"):
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected key = value", line=lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"{source}: unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"{source}: duplicate key (first at line {lines[key]})",
                              key=key, line=lineno)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}", key=key, line=lineno) from exc
        lines[key] = lineno
    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"{source}: missing required key", key=key)
    return RunConfig(**values)


def parse_config(path):
    return parse_config_text(Path(path).read_text(), source=str(path))


def config_echo(cfg):
    """Canonical key=value rendering; parses back to an equal config."""
    parts = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if f.name == "block_widths":
            text = ",".join(str(w) for w in value)
        elif f.name == "track_paths":
            text = ";".join(",".join(str(x) for x in grp) for grp in value)
            if not text:
                continue
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = str(value)
        parts.append(f"{f.name} = {text}")
    return "\n".join(parts) + "\n"


def to_network_spec(cfg):
    mode = WidthMode(cfg.width_mode)
    blocks = []
    cin = 3
    for width in cfg.block_widths:
        blocks.append(BlockSpec(scale=cfg.scale, interval=cfg.interval,
                                in_channels=cin, out_channels=width,
                                width_mode=mode))
        cin = width
    return NetworkSpec(blocks=tuple(blocks), classes=cfg.classes)


def to_train_config(cfg, dtype=np.float32):
    adam = AdamConfig() if cfg.learning_rate is None else \
        AdamConfig(learning_rate=cfg.learning_rate)
    return TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size, optimizer=cfg.optimizer,
        adam=adam, nesterov=NesterovConfig(),
        schedule_profile=cfg.schedule_profile,
        droppath_rate=cfg.droppath_rate, dropout_rate=cfg.dropout_rate,
        l2_lambda=cfg.l2_lambda, seed=cfg.seed, augment=cfg.augment,
        pathwise=cfg.pathwise, pathwise_cycles=cfg.pathwise_cycles,
        track_paths=cfg.track_paths, lr_override=cfg.learning_rate,
        dtype=dtype)
