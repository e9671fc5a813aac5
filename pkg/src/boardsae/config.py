"""Plain-text ``key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BoardSaeError
from .sae.train import TrainConfig


class ConfigError(BoardSaeError, ValueError):
    pass


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    game: str = "chess"
    layer: int = 6
    split_seed: int = 0
    train_games: int = 1000
    test_games: int = 1000
    catalog: str = "board_state"
    coverage_mode: str = "per_pair"
    reconstruction_leak: bool = False
    loss_mode: str = "patched"
    n_min: int = 5

    def to_dict(self) -> dict:
        out = {k: v for k, v in dataclasses.asdict(self).items() if k != "train"}
        out.update(self.train.to_dict())
        return out


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_OWN_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if f.name != "train"}


def _coerce(raw: str, like, key: str):
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            try:
                return int(raw)
            except ValueError:
                v = float(raw)
                if not v.is_integer():
                    raise
                return int(v)
        if isinstance(like, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw


def _default(f):
    return f.default if f.default is not dataclasses.MISSING else f.default_factory()


def parse_pairs(pairs: dict) -> ExperimentConfig:
    """Build a config from string values; unknown keys are rejected."""
    train_kw, own_kw = {}, {}
    for key, raw in pairs.items():
        if key in _TRAIN_FIELDS:
            train_kw[key] = _coerce(raw, _default(_TRAIN_FIELDS[key]), key)
        elif key in _OWN_FIELDS:
            own_kw[key] = _coerce(raw, _default(_OWN_FIELDS[key]), key)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return ExperimentConfig(train=TrainConfig(**train_kw), **own_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_text(text: str) -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def load_config(path=None, overrides: dict = None) -> ExperimentConfig:
    pairs = parse_text(Path(path).read_text()) if path else {}
    pairs.update(overrides or {})
    return parse_pairs(pairs)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(cfg.to_dict().items()))
