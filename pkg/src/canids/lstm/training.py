"""Mini-batch Adam training loop for the next-payload predictor."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..dataset import Dataset
from .network import ModelConfig, ModelParams, NumericFailure, backward

log = logging.getLogger(__name__)

# forward/backward run in this dtype; master weights and Adam state stay float64
TRAIN_DTYPE = np.float32
CLIP_NORM = 5.0


class EmptyDataset(ValueError):
    pass


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


class Adam:
    """Adam over a single flat parameter vector (updated in place)."""

    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self._tmp = np.empty(size)

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        b1, b2, tmp = self.beta1, self.beta2, self._tmp
        self.m *= b1
        np.multiply(grad, 1.0 - b1, out=tmp)
        self.m += tmp
        self.v *= b2
        np.multiply(grad, grad, out=tmp)
        tmp *= 1.0 - b2
        self.v += tmp
        # theta -= lr * mhat / (sqrt(vhat) + eps)
        np.sqrt(self.v, out=tmp)
        tmp *= 1.0 / np.sqrt(1.0 - b2 ** self.t)
        tmp += self.eps
        np.divide(self.m, tmp, out=tmp)
        tmp *= self.lr / (1.0 - b1 ** self.t)
        theta -= tmp


def train(params: ModelParams, data: Dataset, config: ModelConfig | None = None,
          dtype=TRAIN_DTYPE) -> tuple[ModelParams, TrainReport]:
    """Train a copy of ``params`` on ``data``; the input params are left untouched.

    Each epoch visits the examples in a seeded permutation, in batches of
    ``config.batch_size``; every batch gets its own dropout seed.  All
    randomness flows from ``config.seed`` so reruns are bit-identical.
    """
    config = config or params.config
    if data.N < 1:
        raise EmptyDataset("cannot train on an empty dataset")
    start = time.perf_counter()
    master_flat, master = params.copy().flat_views(np.float64)
    master.config = config
    work_flat, work = master.flat_views(dtype)
    opt = Adam(master_flat.size, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    X_all = data.X.astype(dtype)
    Y_all = data.Y.astype(dtype)
    bs = config.batch_size
    for epoch in range(config.epochs):
        order = rng.permutation(data.N)
        seeds = rng.integers(0, 2**63 - 1, size=-(-data.N // bs))
        total = 0.0
        for k, s in enumerate(range(0, data.N, bs)):
            idx = order[s:s + bs]
            work_flat[:] = master_flat
            grads, batch_loss = backward(work, X_all[idx], Y_all[idx],
                                         dropout_seed=int(seeds[k]), clip_norm=CLIP_NORM)
            g = np.concatenate([a.ravel() for a in grads.arrays()]).astype(np.float64)
            if not (np.isfinite(batch_loss) and np.all(np.isfinite(g))):
                raise NumericFailure(f"non-finite loss/gradient at epoch {epoch + 1}, batch {k}")
            opt.step(master_flat, g)
            total += batch_loss * len(idx)
        report.epoch_losses.append(total / data.N)
        log.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, report.epoch_losses[-1])
    report.wall_time = time.perf_counter() - start
    return master.copy(), report
