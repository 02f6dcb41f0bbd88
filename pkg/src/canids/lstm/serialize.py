"""Binary model container.

Layout (all little-endian, no padding)::

    magic            4s   b"CANM"
    version          u32  1
    input_width      u32
    window           u32
    lstm_hidden      3*u32
    dense_hidden     u32
    output_width     u32
    activation       u8   0 = sigmoid, 1 = softmax
    dropout_rate     f64
    batch_size       u32
    learning_rate    f64
    epochs           u32
    seed             u64
    n_values         u64
    values           n_values * f64

Values are written layer by layer.  Within an LSTM layer the gates go
i, f, o, g and each gate contributes W_g (hidden x in, row-major), then
U_g (hidden x hidden), then b_g.  After the three LSTM layers come dense1
W (dense x hidden), dense1 b, dense2 W (64 x dense), dense2 b.
"""
from __future__ import annotations

import struct

import numpy as np

from .network import GATES, LstmLayerParams, ModelConfig, ModelParams

MAGIC = b"CANM"
VERSION = 1
_HEADER = struct.Struct("<4sI")
_CONFIG = struct.Struct("<IIIIIIIBdIdIQQ")
_ACTIVATIONS = ("sigmoid", "softmax")


class ModelFileError(Exception):
    pass


class IoFailure(ModelFileError):
    pass


class BadMagic(ModelFileError):
    pass


class VersionMismatch(ModelFileError):
    pass


class SizeMismatch(ModelFileError):
    pass


def _ordered_blocks(params: ModelParams) -> list[np.ndarray]:
    blocks = []
    for layer in params.layers:
        for g in GATES:
            blocks.extend(layer.gate(g))
    return blocks + [params.W1, params.b1, params.W2, params.b2]


def _shapes(cfg: ModelConfig) -> list[tuple[int, ...]]:
    shapes = []
    fan_in = cfg.input_width
    for H in cfg.lstm_hidden:
        shapes += [(H, fan_in), (H, H), (H,)] * len(GATES)
        fan_in = H
    D = cfg.dense_hidden
    return shapes + [(D, fan_in), (D,), (cfg.output_width, D), (cfg.output_width,)]


def to_bytes(params: ModelParams) -> bytes:
    cfg = params.config
    values = np.concatenate([b.ravel() for b in _ordered_blocks(params)]).astype("<f8")
    header = _HEADER.pack(MAGIC, VERSION) + _CONFIG.pack(
        cfg.input_width, cfg.window, *cfg.lstm_hidden, cfg.dense_hidden, cfg.output_width,
        _ACTIVATIONS.index(cfg.output_activation), cfg.dropout_rate, cfg.batch_size,
        cfg.learning_rate, cfg.epochs, cfg.seed, values.size,
    )
    return header + values.tobytes()


def from_bytes(buf: bytes) -> ModelParams:
    if len(buf) < _HEADER.size:
        raise SizeMismatch(f"file holds {len(buf)} bytes, header needs {_HEADER.size}")
    magic, version = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"format version {version}, reader supports {VERSION}")
    if len(buf) < _HEADER.size + _CONFIG.size:
        raise SizeMismatch("truncated config block")
    (iw, win, h0, h1, h2, dense, ow, act, drop, bs, lr, epochs, seed,
     n_values) = _CONFIG.unpack_from(buf, _HEADER.size)
    if act >= len(_ACTIVATIONS):
        raise ModelFileError(f"unknown activation code {act}")
    try:
        cfg = ModelConfig(input_width=iw, window=win, lstm_hidden=(h0, h1, h2), dense_hidden=dense,
                          output_width=ow, dropout_rate=drop, output_activation=_ACTIVATIONS[act],
                          batch_size=bs, learning_rate=lr, epochs=epochs, seed=seed)
    except ValueError as exc:
        raise ModelFileError(f"invalid config block: {exc}") from exc
    shapes = _shapes(cfg)
    expected = sum(int(np.prod(s)) for s in shapes)
    body = buf[_HEADER.size + _CONFIG.size:]
    if n_values != expected or len(body) != 8 * expected:
        raise SizeMismatch(f"expected {expected} values, header says {n_values}, "
                           f"body holds {len(body) / 8:g}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    blocks, k = [], 0
    for s in shapes:
        n = int(np.prod(s))
        blocks.append(values[k:k + n].reshape(s))
        k += n
    it = iter(blocks)
    layers = []
    for _ in cfg.lstm_hidden:
        per_gate = [(next(it), next(it), next(it)) for _ in GATES]
        layers.append(LstmLayerParams(
            W=np.concatenate([w for w, _, _ in per_gate]),
            U=np.concatenate([u for _, u, _ in per_gate]),
            b=np.concatenate([b for _, _, b in per_gate]),
        ))
    W1, b1, W2, b2 = (np.array(next(it)) for _ in range(4))
    return ModelParams(layers, W1, b1, W2, b2, config=cfg)


def save_model(params: ModelParams, path) -> None:
    data = to_bytes(params)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_model(path) -> ModelParams:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return from_bytes(buf)
