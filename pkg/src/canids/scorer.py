"""Gaussian anomaly scores from next-payload prediction error."""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .can_log import CanFrame, frames_to_bits, payload_to_bits
from .dataset import sliding_windows
from .lstm.network import ModelParams, predict

VAR_FLOOR = 1e-12
Z_CUTOFF = 39.0  # beyond this the upper tail is below double precision
CSV_HEADER = ("timestamp", "aid", "e", "z", "p", "injected")


class TooFewErrors(ValueError):
    pass


@dataclass(frozen=True)
class GaussianErrorModel:
    mu: float
    sigma2: float
    n: int

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.sigma2, VAR_FLOOR))

    def score(self, e: float) -> tuple[float, float]:
        return p_value(self, e)

    def to_text(self) -> str:
        return (f"mu = {self.mu!r}\nsigma2 = {self.sigma2!r}\n"
                f"sigma = {self.sigma!r}\nn = {self.n}\n")

    @classmethod
    def from_text(cls, text: str) -> "GaussianErrorModel":
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        try:
            return cls(mu=float(kv["mu"]), sigma2=float(kv["sigma2"]), n=int(kv["n"]))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad error-model file: {exc}") from exc


@dataclass(frozen=True)
class AnomalyScore:
    timestamp: float
    aid: int
    e: float
    z: float
    p: float
    target_injected: bool = False


def prediction_error(y, yhat) -> float | np.ndarray:
    """L2 distance between the observed bits and the predicted probabilities.

    Accepts single vectors or row-stacked batches.
    """
    d = np.asarray(yhat, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    out = np.sqrt(np.sum(d * d, axis=-1))
    return float(out) if out.ndim == 0 else out


def fit_error_model(errors: Iterable[float]) -> GaussianErrorModel:
    e = np.asarray(list(errors), dtype=np.float64)
    if e.size < 2:
        raise TooFewErrors(f"need at least 2 errors, got {e.size}")
    mu = float(e.sum() / e.size)
    sigma2 = float(np.sum((e - mu) ** 2) / (e.size - 1))
    return GaussianErrorModel(mu=mu, sigma2=sigma2, n=int(e.size))


def upper_tail(z: float) -> float:
    """1 - Phi(z) for the standard normal, accurate in both tails."""
    if z > Z_CUTOFF:
        return 0.0
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def p_value(model: GaussianErrorModel, e: float) -> tuple[float, float]:
    z = (e - model.mu) / model.sigma
    return z, upper_tail(z)


def _scores_from_arrays(aid, ts, injected, e, model) -> list[AnomalyScore]:
    out = []
    for t, inj, err in zip(ts, injected, e):
        z, p = p_value(model, float(err))
        out.append(AnomalyScore(float(t), aid, float(err), z, p, bool(inj)))
    return out


def score_stream(params: ModelParams, model: GaussianErrorModel,
                 frames: Sequence[CanFrame]) -> list[AnomalyScore]:
    """Score every frame from the (window+1)-th on against its predecessors.

    Only the order of payloads matters; timestamps are carried through
    untouched.  Windows are batched through the network in fixed-size
    chunks, so output is a deterministic function of the inputs.
    """
    window = params.config.window
    if len(frames) <= window:
        return []
    aids = {f.aid for f in frames}
    if len(aids) > 1:
        raise ValueError(f"score_stream expects one AID, got {sorted(aids)}")
    bits = frames_to_bits(frames)
    X, Y = sliding_windows(bits, window)
    e = prediction_error(Y, predict(params, X))
    targets = frames[window:]
    return _scores_from_arrays(frames[0].aid, [f.timestamp for f in targets],
                               [f.injected for f in targets], e, model)


class StreamScorer:
    """Online variant: push frames one by one, get a score once the window is full."""

    def __init__(self, params: ModelParams, model: GaussianErrorModel):
        self.params = params
        self.model = model
        self._history: deque[np.ndarray] = deque(maxlen=params.config.window)

    def push(self, frame: CanFrame) -> AnomalyScore | None:
        bits = payload_to_bits(frame.payload, frame.dlc)
        score = None
        if len(self._history) == self._history.maxlen:
            yhat = predict(self.params, np.stack(self._history))
            e = prediction_error(bits, yhat)
            z, p = p_value(self.model, e)
            score = AnomalyScore(frame.timestamp, frame.aid, e, z, p, frame.injected)
        self._history.append(bits)
        return score


def write_scores_csv(scores: Iterable[AnomalyScore], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in scores:
        w.writerow([f"{s.timestamp:.9g}", f"{s.aid:03X}", f"{s.e:.9g}", f"{s.z:.9g}",
                    f"{s.p:.9g}", int(s.target_injected)])


def read_scores_csv(src: TextIO) -> list[AnomalyScore]:
    r = csv.reader(src)
    header = next(r, None)
    if header is None:
        return []
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected score CSV header {header}")
    out = []
    for row in r:
        if not row:
            continue
        t, aid, e, z, p, inj = row
        out.append(AnomalyScore(float(t), int(aid, 16), float(e), float(z), float(p),
                                inj.strip() in ("1", "true", "True")))
    return out
