"""Central finite-difference check of the analytic BPTT gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ModelConfig, ModelParams, backward, forward, init_model, loss

TINY_CONFIG = ModelConfig(lstm_hidden=(4, 4, 4), dense_hidden=4, dropout_rate=0.0)


@dataclass
class GradCheckResult:
    seed: int
    max_rel_error: float
    per_tensor: dict[str, float]


def numeric_gradient(params: ModelParams, X, Y, eps: float = 1e-5) -> ModelParams:
    """Central differences of the dropout-free mean batch loss, entry by entry."""
    mode = params.config.output_activation
    probe = params.copy()
    grads = probe.zeros_like()
    for p, g in zip(probe.arrays(), grads.arrays()):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + eps
            up = loss(forward(probe, X)[0], Y, mode)
            flat_p[j] = orig - eps
            down = loss(forward(probe, X)[0], Y, mode)
            flat_p[j] = orig
            flat_g[j] = (up - down) / (2 * eps)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(config: ModelConfig = TINY_CONFIG, seed: int = 0, batch: int = 3,
                    eps: float = 1e-5) -> GradCheckResult:
    """Compare analytic vs numeric gradients on random bit windows.

    Relative error is ``||a - n|| / (||a|| + ||n||)`` per parameter tensor;
    the result reports the worst tensor.
    """
    rng = np.random.default_rng(seed)
    params = init_model(config, seed)
    # perturb biases off their init values so every tensor carries signal
    for a in params.arrays():
        a += rng.normal(0.0, 0.1, size=a.shape)
    X = rng.integers(0, 2, size=(batch, config.window, config.input_width)).astype(np.float64)
    Y = rng.integers(0, 2, size=(batch, config.output_width)).astype(np.float64)
    analytic, _ = backward(params, X, Y, dropout_seed=None, clip_norm=None)
    numeric = numeric_gradient(params, X, Y, eps)
    per = {name: relative_error(a, n)
           for (name, a), n in zip(analytic.named_arrays(), numeric.arrays())}
    return GradCheckResult(seed, max(per.values()), per)
