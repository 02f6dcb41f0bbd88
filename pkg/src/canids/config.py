"""Flat ``key = value`` run configuration shared by all subcommands."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Iterable

from .lstm.network import ModelConfig
from .simulator import (
    REVERSE_AID,
    REVERSE_ATTACK_PAYLOAD,
    TRACE_GENERATORS,
    WHEEL_AID,
    WHEEL_ATTACK_PAYLOAD,
    AttackSpec,
    TraceSpec,
)


class ConfigError(ValueError):
    pass


def _hex_int(v: str) -> int:
    return int(v, 16)


def _hidden(v: str) -> tuple[int, ...]:
    parts = [int(x) for x in v.replace(",", " ").split()]
    return tuple(parts * 3) if len(parts) == 1 else tuple(parts)


def _payload(v: str) -> bytes:
    b = bytes.fromhex(v.removeprefix("0x").removeprefix("0X"))
    if len(b) != 8:
        raise ValueError("attack_payload needs 16 hex digits")
    return b


@dataclass(frozen=True)
class RunConfig:
    trace: str = "wheel_speed"
    aid: int | None = None
    duration: float = 141.0
    rate: float = 100.0
    seed: int = 42
    attack_payload: bytes | None = None
    inject_rate: float = 100.0
    t_start: float = 14.0
    t_end: float = 29.0
    train_fraction: float = 1.0
    input_width: int = 64
    window: int = 10
    lstm_hidden: tuple[int, ...] = (128, 128, 128)
    dense_hidden: int = 128
    output_width: int = 64
    dropout_rate: float = 0.2
    output_activation: str = "sigmoid"
    batch_size: int = 32
    learning_rate: float = 1e-3
    epochs: int = 50

    @property
    def target_aid(self) -> int:
        if self.aid is not None:
            return self.aid
        return WHEEL_AID if self.trace == "wheel_speed" else REVERSE_AID

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            input_width=self.input_width, window=self.window, lstm_hidden=self.lstm_hidden,
            dense_hidden=self.dense_hidden, output_width=self.output_width,
            dropout_rate=self.dropout_rate, output_activation=self.output_activation,
            batch_size=self.batch_size, learning_rate=self.learning_rate, epochs=self.epochs,
            seed=self.seed,
        )

    def trace_spec(self) -> TraceSpec:
        return TraceSpec(duration=self.duration, rate=self.rate, seed=self.seed)

    def attack_spec(self) -> AttackSpec:
        payload = self.attack_payload
        if payload is None:
            payload = WHEEL_ATTACK_PAYLOAD if self.trace == "wheel_speed" else REVERSE_ATTACK_PAYLOAD
        return AttackSpec(aid=self.target_aid, payload=payload, inject_rate=self.inject_rate,
                          t_start=self.t_start, t_end=self.t_end)

    def validate(self) -> "RunConfig":
        if self.trace not in TRACE_GENERATORS:
            raise ConfigError(f"trace must be one of {sorted(TRACE_GENERATORS)}")
        if not (0 < self.train_fraction <= 1):
            raise ConfigError("train_fraction must be in (0, 1]")
        try:
            self.model_config()
            self.trace_spec()
            self.attack_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


_PARSERS = {
    "trace": str, "aid": _hex_int, "duration": float, "rate": float, "seed": int,
    "attack_payload": _payload, "inject_rate": float, "t_start": float, "t_end": float,
    "train_fraction": float, "input_width": int, "window": int, "lstm_hidden": _hidden,
    "dense_hidden": int, "output_width": int, "dropout_rate": float,
    "output_activation": str, "batch_size": int, "learning_rate": float, "epochs": int,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config(lines: Iterable[str], base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return replace(base or RunConfig(), **values).validate()


def load_config(path=None, seed: int | None = None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = parse_config(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed must be unsigned")
        cfg = replace(cfg, seed=seed)
    return cfg.validate()
