"""Synthetic ambient traffic for two AID archetypes, plus fixed-payload injection."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .can_log import MAX_AID, CanFrame

WHEEL_AID = 0x0D0
REVERSE_AID = 0x244

# mean-reverting base speed, raw wheel-sensor units
SPEED_THETA = 0.5
SPEED_MEAN = 3000.0
SPEED_ETA = 120.0
WHEEL_NOISE_SD = 15.0
U16_MAX = 65535

REVERSE_BIT = 0x40
REVERSE_MEAN_DWELL = 20.0

WHEEL_ATTACK_PAYLOAD = bytes.fromhex("FFFF00000000FFFF")
REVERSE_ATTACK_PAYLOAD = bytes.fromhex("4000000000000000")


@dataclass(frozen=True)
class TraceSpec:
    duration: float = 141.0
    rate: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0 or not self.rate > 0:
            raise ValueError("duration and rate must be positive")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.rate))

    def timestamps(self) -> np.ndarray:
        # microsecond grid so ties with injected frames are exact
        return np.round(np.arange(self.n_frames) / self.rate, 6)


@dataclass(frozen=True)
class AttackSpec:
    aid: int
    payload: bytes
    inject_rate: float = 100.0
    t_start: float = 14.0
    t_end: float = 29.0

    def __post_init__(self):
        if not (0 <= self.aid <= MAX_AID):
            raise ValueError(f"aid {self.aid:#x} out of range")
        if len(self.payload) != 8:
            raise ValueError("attack payload must be 8 bytes")
        if not (0 <= self.t_start < self.t_end) or self.inject_rate < 0:
            raise ValueError("need 0 <= t_start < t_end and inject_rate >= 0")

    def timestamps(self) -> np.ndarray:
        if self.inject_rate == 0:
            return np.zeros(0)
        n = math.ceil((self.t_end - self.t_start) * self.inject_rate - 1e-9)
        return np.round(self.t_start + np.arange(n) / self.inject_rate, 6)


def base_speed_walk(n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Euler-Maruyama steps of an Ornstein-Uhlenbeck speed starting from rest."""
    noise = rng.standard_normal(n)
    s = np.empty(n)
    cur = 0.0
    sq = math.sqrt(dt)
    for k in range(n):
        s[k] = cur
        cur = cur + SPEED_THETA * (SPEED_MEAN - cur) * dt + SPEED_ETA * noise[k] * sq
        cur = min(max(cur, 0.0), U16_MAX)
    return s


def gen_wheel_speed_trace(spec: TraceSpec, aid: int = WHEEL_AID) -> list[CanFrame]:
    """Four big-endian u16 wheel speeds per frame, each base speed plus its own jitter."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_frames
    base = base_speed_walk(n, 1.0 / spec.rate, rng)
    wheels = base[:, None] + rng.normal(0.0, WHEEL_NOISE_SD, size=(n, 4))
    wheels = np.clip(np.rint(wheels), 0, U16_MAX).astype(">u2")
    ts = spec.timestamps()
    return [CanFrame(float(t), aid, 8, wheels[k].tobytes()) for k, t in enumerate(ts)]


def reverse_states(spec: TraceSpec, rng: np.random.Generator) -> np.ndarray:
    """On/off indicator with exponential dwell times, starting off."""
    ts = spec.timestamps()
    toggles = []
    t = rng.exponential(REVERSE_MEAN_DWELL)
    while t < spec.duration:
        toggles.append(t)
        t += rng.exponential(REVERSE_MEAN_DWELL)
    return np.searchsorted(np.asarray(toggles), ts, side="right") % 2 == 1


def gen_reverse_indicator_trace(spec: TraceSpec, aid: int = REVERSE_AID) -> list[CanFrame]:
    rng = np.random.default_rng(spec.seed)
    on = reverse_states(spec, rng)
    on_payload = bytes([REVERSE_BIT]) + bytes(7)
    off_payload = bytes(8)
    return [CanFrame(float(t), aid, 8, on_payload if s else off_payload)
            for t, s in zip(spec.timestamps(), on)]


def count_toggles(frames: Sequence[CanFrame]) -> int:
    return sum(a.payload != b.payload for a, b in zip(frames, frames[1:]))


TRACE_GENERATORS = {
    "wheel_speed": gen_wheel_speed_trace,
    "reverse_indicator": gen_reverse_indicator_trace,
}


def inject_attack(ambient: Sequence[CanFrame], atk: AttackSpec) -> list[CanFrame]:
    """Merge fixed-payload attack frames into ``ambient``.

    The merge is a stable sort on timestamp with ambient frames first, so a
    tie always places the ambient frame ahead of the injected one.
    """
    attack = [CanFrame(float(t), atk.aid, 8, atk.payload, injected=True) for t in atk.timestamps()]
    if not attack:
        return list(ambient)
    merged = list(ambient) + attack
    merged.sort(key=lambda f: f.timestamp)  # list.sort is stable
    return merged


def attack_contrast(ambient: Sequence[CanFrame], atk: AttackSpec) -> float:
    """Fraction of ambient frames inside the attack window whose payload differs from the attack's.

    Zero means the injection is byte-identical to legitimate traffic.
    """
    inside = [f for f in ambient if f.aid == atk.aid and atk.t_start <= f.timestamp < atk.t_end]
    if not inside:
        return 0.0
    return sum(f.payload != atk.payload for f in inside) / len(inside)


def pick_test_seed(trace: str, spec: TraceSpec, atk: AttackSpec, min_contrast: float = 0.5,
                   max_tries: int = 1000) -> int:
    """Smallest seed after ``spec.seed`` whose ambient trace makes ``atk`` a real content change."""
    gen = TRACE_GENERATORS[trace]
    for seed in range(spec.seed + 1, spec.seed + 1 + max_tries):
        if attack_contrast(gen(replace(spec, seed=seed), atk.aid), atk) >= min_contrast:
            return seed
    raise RuntimeError(f"no seed within {max_tries} tries gives contrast >= {min_contrast}")


def write_truth_csv(frames: Iterable[CanFrame], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("timestamp", "aid", "injected"))
    for f in frames:
        w.writerow((f"{f.timestamp:.6f}", f"{f.aid:03X}", int(f.injected)))


def read_truth_csv(src: TextIO) -> list[tuple[float, int, bool]]:
    r = csv.reader(src)
    header = next(r, None)
    if header is None:
        return []
    if tuple(header) != ("timestamp", "aid", "injected"):
        raise ValueError(f"unexpected truth CSV header {header}")
    return [(float(t), int(a, 16), inj.strip() == "1") for t, a, inj in (row for row in r if row)]
