"""Sliding-window supervised examples over one AID's payload sequence."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .can_log import PAYLOAD_BITS, CanFrame, frames_to_bits

DEFAULT_WINDOW = 10


class BadFraction(ValueError):
    pass


@dataclass(frozen=True)
class WindowedExample:
    x: np.ndarray  # (window, 64), oldest row first
    y: np.ndarray  # (64,)
    target_timestamp: float
    target_injected: bool


@dataclass
class Dataset:
    """Windows stored as stacked arrays; index it to get a WindowedExample."""

    aid: int | None
    X: np.ndarray  # (N, window, 64) uint8
    Y: np.ndarray  # (N, 64) uint8
    timestamps: np.ndarray  # (N,) float64
    injected: np.ndarray  # (N,) bool

    @property
    def N(self) -> int:
        return len(self.Y)

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, i: int) -> WindowedExample:
        return WindowedExample(self.X[i], self.Y[i], float(self.timestamps[i]), bool(self.injected[i]))

    def __iter__(self):
        return (self[i] for i in range(self.N))

    def subset(self, sl: slice) -> "Dataset":
        return Dataset(self.aid, self.X[sl], self.Y[sl], self.timestamps[sl], self.injected[sl])


def sliding_windows(bits: np.ndarray, window: int = DEFAULT_WINDOW) -> tuple[np.ndarray, np.ndarray]:
    """(n, 64) bit rows -> X of shape (n-window, window, 64) and Y of shape (n-window, 64)."""
    n = len(bits)
    if n <= window:
        return (np.zeros((0, window, PAYLOAD_BITS), dtype=np.uint8),
                np.zeros((0, PAYLOAD_BITS), dtype=np.uint8))
    view = np.lib.stride_tricks.sliding_window_view(bits, window, axis=0)  # (n-window+1, 64, window)
    X = np.ascontiguousarray(view[: n - window].transpose(0, 2, 1))
    return X, bits[window:].copy()


def build_windows(frames: Sequence[CanFrame], window: int = DEFAULT_WINDOW) -> Dataset:
    """Example i holds frames i..i+window-1 as context and frame i+window as label.

    Frames are used in the given order; timestamps only ride along as metadata.
    """
    aids = {f.aid for f in frames}
    if len(aids) > 1:
        raise ValueError(f"frames span several AIDs: {sorted(aids)}")
    X, Y = sliding_windows(frames_to_bits(frames), window)
    targets = frames[window:]
    return Dataset(
        aid=next(iter(aids), None),
        X=X,
        Y=Y,
        timestamps=np.array([f.timestamp for f in targets], dtype=np.float64),
        injected=np.array([f.injected for f in targets], dtype=bool),
    )


def split_chronological(ds: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    if not (0 < train_fraction <= 1) or math.isnan(train_fraction):
        raise BadFraction(f"train_fraction must be in (0, 1], got {train_fraction}")
    k = math.floor(ds.N * train_fraction)
    return ds.subset(slice(0, k)), ds.subset(slice(k, None))
