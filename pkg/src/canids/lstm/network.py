"""Stacked LSTM next-payload predictor with hand-written BPTT.

Shapes: a batch of windows is ``(B, T, 64)``; every LSTM layer keeps its four
gates fused row-wise in the order input, forget, output, candidate, so
``W`` is ``(4H, in)``, ``U`` is ``(4H, H)`` and ``b`` is ``(4H,)``.  Dense
weights are stored ``(out, in)``.  Everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

GATES = ("i", "f", "o", "g")
CLAMP = 1e-7
N_LSTM_LAYERS = 3


class NumericFailure(ArithmeticError):
    """Raised when training produces a non-finite loss or gradient."""


@dataclass(frozen=True)
class ModelConfig:
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
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lstm_hidden", tuple(int(h) for h in self.lstm_hidden))
        if len(self.lstm_hidden) != N_LSTM_LAYERS:
            raise ValueError(f"need {N_LSTM_LAYERS} LSTM widths, got {self.lstm_hidden}")
        widths = (self.input_width, self.window, self.dense_hidden, self.output_width, *self.lstm_hidden)
        if min(widths) < 1:
            raise ValueError("all widths must be >= 1")
        if self.output_width != 64:
            raise ValueError("output_width must be 64")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.output_activation not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown output_activation {self.output_activation!r}")
        if self.batch_size < 1 or self.epochs < 0 or not self.learning_rate > 0:
            raise ValueError("batch_size >= 1, epochs >= 0 and learning_rate > 0 required")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


@dataclass
class LstmLayerParams:
    W: np.ndarray  # (4H, in)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views of (W_g, U_g, b_g) for one gate."""
        k = GATES.index(name)
        H = self.hidden
        sl = slice(k * H, (k + 1) * H)
        return self.W[sl], self.U[sl], self.b[sl]


@dataclass
class ModelParams:
    layers: list[LstmLayerParams]
    W1: np.ndarray  # (dense_hidden, H_top)
    b1: np.ndarray
    W2: np.ndarray  # (64, dense_hidden)
    b2: np.ndarray
    config: ModelConfig = field(default_factory=ModelConfig)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.U, layer.b]
        return out + [self.W1, self.b1, self.W2, self.b2]

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        names = [f"lstm{k}.{n}" for k in range(len(self.layers)) for n in "WUb"]
        names += ["dense1.W", "dense1.b", "dense2.W", "dense2.b"]
        return zip(names, self.arrays())

    def map(self, fn) -> "ModelParams":
        return ModelParams(
            layers=[LstmLayerParams(fn(l.W), fn(l.U), fn(l.b)) for l in self.layers],
            W1=fn(self.W1), b1=fn(self.b1), W2=fn(self.W2), b2=fn(self.b2),
            config=self.config,
        )

    def copy(self) -> "ModelParams":
        return self.map(np.array)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def flat_views(self, dtype=None) -> tuple[np.ndarray, "ModelParams"]:
        """Copy into one contiguous vector; return it and params viewing into it."""
        arrays = self.arrays()
        flat = np.concatenate([x.ravel() for x in arrays]).astype(dtype or arrays[0].dtype)
        views, k = [], 0
        for x in arrays:
            views.append(flat[k:k + x.size].reshape(x.shape))
            k += x.size
        it = iter(views)
        return flat, self.map(lambda _: next(it))

    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def equals(self, other: "ModelParams") -> bool:
        """Bit-identical comparison (config included)."""
        if self.config != other.config:
            return False
        return all(a.shape == b.shape and a.tobytes() == b.tobytes()
                   for a, b in zip(self.arrays(), other.arrays()))


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_out, fan_in))


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def init_model(config: ModelConfig, seed: int | None = None) -> ModelParams:
    """Glorot-uniform input/dense weights, orthogonal recurrent blocks, forget bias 1."""
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = config.input_width
    for H in config.lstm_hidden:
        W = np.concatenate([_glorot(rng, H, fan_in) for _ in GATES])
        U = np.concatenate([_orthogonal(rng, H) for _ in GATES])
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        layers.append(LstmLayerParams(W, U, b))
        fan_in = H
    D = config.dense_hidden
    return ModelParams(
        layers=layers,
        W1=_glorot(rng, D, fan_in), b1=np.zeros(D),
        W2=_glorot(rng, config.output_width, D), b2=np.zeros(config.output_width),
        config=config,
    )


def _gate_scale(H: int) -> np.ndarray:
    # sigmoid(x) = (1 + tanh(x/2)) / 2 lets one tanh call activate all four gates
    s = np.ones(4 * H)
    s[:3 * H] = 0.5
    return s


def _activate(z: np.ndarray, H: int, scale: np.ndarray, out: np.ndarray) -> np.ndarray:
    np.multiply(z, scale, out=out)
    np.tanh(out, out=out)
    sg = out[..., :3 * H]
    sg *= 0.5
    sg += 0.5
    return out


def lstm_cell_step(layer: LstmLayerParams, x_t, h_prev, c_prev):
    """One timestep of the standard LSTM cell; works on single vectors or batches."""
    H = layer.hidden
    z = np.asarray(x_t, dtype=np.float64) @ layer.W.T + np.asarray(h_prev) @ layer.U.T + layer.b
    a = _activate(z, H, _gate_scale(H), np.empty_like(z))
    i, f, o, g = a[..., :H], a[..., H:2 * H], a[..., 2 * H:3 * H], a[..., 3 * H:]
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def _layer_forward(layer: LstmLayerParams, X: np.ndarray):
    """Run one layer over a time-major input ``(T, B, in)``."""
    T, B, _ = X.shape
    H = layer.hidden
    dt = X.dtype
    scale = _gate_scale(H).astype(dt)
    Z = (X.reshape(T * B, -1) @ layer.W.T).reshape(T, B, 4 * H)
    Z += layer.b
    acts = Z  # activated in place, step by step
    cs = np.empty((T, B, H), dt)
    tcs = np.empty((T, B, H), dt)
    hs = np.empty((T, B, H), dt)
    UT = layer.U.T
    c = np.zeros((B, H), dt)
    for t in range(T):
        z = Z[t]
        if t:
            z += hs[t - 1] @ UT
        a = _activate(z, H, scale, acts[t])
        c = a[:, H:2 * H] * c
        c += a[:, :H] * a[:, 3 * H:]
        cs[t] = c
        np.tanh(c, out=tcs[t])
        np.multiply(a[:, 2 * H:3 * H], tcs[t], out=hs[t])
    return hs, (X, acts, cs, tcs, hs)


def _layer_backward(layer: LstmLayerParams, cache, dh_last: np.ndarray | None, dH: np.ndarray | None,
                    need_dx: bool):
    """BPTT through one layer (time-major).

    Exactly one of ``dh_last`` (gradient on the final hidden state only) or
    ``dH`` (gradient on every timestep's hidden state) is given.
    """
    X, acts, cs, tcs, hs = cache
    T, B, H = hs.shape
    deriv = acts * (1.0 - acts)
    deriv[..., 3 * H:] = 1.0 - acts[..., 3 * H:] ** 2
    dt = hs.dtype
    dZ = np.empty((T, B, 4 * H), dt)
    dh_next = np.zeros((B, H), dt)
    dc_next = np.zeros((B, H), dt)
    for t in range(T - 1, -1, -1):
        a, d, tc = acts[t], deriv[t], tcs[t]
        if dH is not None:
            dh = dH[t] + dh_next
        elif t == T - 1:
            dh = dh_last + dh_next
        else:
            dh = dh_next
        dc = dh * a[:, 2 * H:3 * H] * (1.0 - tc * tc)
        dc += dc_next
        dz = dZ[t]
        np.multiply(dc * a[:, 3 * H:], d[:, :H], out=dz[:, :H])
        if t:
            np.multiply(dc * cs[t - 1], d[:, H:2 * H], out=dz[:, H:2 * H])
        else:
            dz[:, H:2 * H] = 0.0
        np.multiply(dh * tc, d[:, 2 * H:3 * H], out=dz[:, 2 * H:3 * H])
        np.multiply(dc * a[:, :H], d[:, 3 * H:], out=dz[:, 3 * H:])
        dc_next = dc * a[:, H:2 * H]
        dh_next = dz @ layer.U
    flat = dZ.reshape(T * B, 4 * H)
    dW = flat.T @ X.reshape(T * B, -1)
    db = flat.sum(axis=0)
    dU = dZ[1:].reshape((T - 1) * B, 4 * H).T @ hs[:-1].reshape((T - 1) * B, H)
    dX = (flat @ layer.W).reshape(T, B, -1) if need_dx else None
    return LstmLayerParams(dW, dU, db), dX


def dropout_mask(seed: int, shape: tuple[int, ...], rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped units, 1/(1-rate) for kept ones."""
    keep = np.random.default_rng(seed).random(shape) >= rate
    return keep / (1.0 - rate)


def forward(params: ModelParams, x, mode: str = "infer", dropout_seed: int | None = None):
    """Run the network on one window ``(T, 64)`` or a batch ``(B, T, 64)``.

    Dropout is applied only when ``mode == "train"`` and a seed is given.
    Returns ``(yhat, cache)``; ``cache`` feeds :func:`backward`.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    X = np.asarray(x, dtype=params.W1.dtype)
    single = X.ndim == 2
    if single:
        X = X[None]
    cfg = params.config
    layer_caches = []
    h = np.ascontiguousarray(X.transpose(1, 0, 2))
    for layer in params.layers:
        h, cache = _layer_forward(layer, h)
        layer_caches.append(cache)
    h_last = h[-1]
    a1 = h_last @ params.W1.T + params.b1
    r = np.maximum(a1, 0.0)
    mask = None
    if mode == "train" and dropout_seed is not None and cfg.dropout_rate > 0:
        mask = dropout_mask(dropout_seed, r.shape, cfg.dropout_rate).astype(r.dtype)
        r = r * mask
    z2 = r @ params.W2.T + params.b2
    if cfg.output_activation == "sigmoid":
        yhat = 0.5 * (1.0 + np.tanh(0.5 * z2))
    else:
        e = np.exp(z2 - z2.max(axis=1, keepdims=True))
        yhat = e / e.sum(axis=1, keepdims=True)
    cache = {"layers": layer_caches, "h_last": h_last, "a1": a1, "r": r, "mask": mask, "yhat": yhat}
    return (yhat[0] if single else yhat), cache


def loss(yhat, y, mode: str = "sigmoid") -> float:
    """Mean BCE (sigmoid) or mean squared error (softmax) over bits, averaged over the batch."""
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if mode == "sigmoid":
        p = np.clip(yhat, CLAMP, 1.0 - CLAMP)
        per = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    elif mode == "softmax":
        per = (yhat - y) ** 2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(per.mean())


def _output_grad(yhat: np.ndarray, Y: np.ndarray, activation: str) -> np.ndarray:
    """d(mean loss)/d(pre-activation output)."""
    n = yhat.size
    if activation == "sigmoid":
        # BCE o sigmoid collapses to (yhat - y); the clamp kills it where active
        active = (yhat > CLAMP) & (yhat < 1.0 - CLAMP)
        return (yhat - Y) * active / n
    g = 2.0 * (yhat - Y) / n
    return yhat * (g - (g * yhat).sum(axis=1, keepdims=True))


def clip_by_global_norm(grads: ModelParams, max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; return the raw norm."""
    norm = float(np.sqrt(sum(np.vdot(a, a) for a in grads.arrays())))
    if norm > max_norm:
        s = max_norm / norm
        for a in grads.arrays():
            a *= s
    return norm


def backward(params: ModelParams, X, Y, dropout_seed: int | None = None, clip_norm: float | None = 5.0):
    """Gradients of the mean batch loss w.r.t. every parameter.

    ``dropout_seed=None`` disables dropout; ``clip_norm=None`` disables
    global-norm clipping.  Returns ``(grads, loss)``.
    """
    X = np.asarray(X, dtype=params.W1.dtype)
    Y = np.asarray(Y, dtype=params.W1.dtype)
    if X.ndim == 2:
        X, Y = X[None], Y[None]
    if len(X) == 0:
        raise ValueError("empty batch")
    cfg = params.config
    mode = "train" if dropout_seed is not None else "infer"
    yhat, cache = forward(params, X, mode=mode, dropout_seed=dropout_seed)
    batch_loss = loss(yhat, Y, cfg.output_activation)

    dz2 = _output_grad(yhat, Y, cfg.output_activation)
    dW2 = dz2.T @ cache["r"]
    db2 = dz2.sum(axis=0)
    dr = dz2 @ params.W2
    if cache["mask"] is not None:
        dr *= cache["mask"]
    da1 = dr * (cache["a1"] > 0)
    dW1 = da1.T @ cache["h_last"]
    db1 = da1.sum(axis=0)
    dh_last = da1 @ params.W1

    layer_grads = [None] * len(params.layers)
    dH = None
    for k in range(len(params.layers) - 1, -1, -1):
        g, dH = _layer_backward(params.layers[k], cache["layers"][k],
                                dh_last if dH is None else None, dH, need_dx=k > 0)
        layer_grads[k] = g
    grads = ModelParams(layer_grads, dW1, db1, dW2, db2, config=cfg)
    if clip_norm is not None:
        clip_by_global_norm(grads, clip_norm)
    return grads, batch_loss


def predict(params: ModelParams, x, chunk: int = 1024) -> np.ndarray:
    """Inference-mode prediction for one window or a stack of windows."""
    X = np.asarray(x)
    if X.ndim == 2:
        return forward(params, X, mode="infer")[0]
    if len(X) == 0:
        return np.zeros((0, params.config.output_width))
    return np.concatenate([forward(params, X[s:s + chunk], mode="infer")[0]
                           for s in range(0, len(X), chunk)])

