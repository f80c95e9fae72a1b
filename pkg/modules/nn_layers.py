# modules/nn_layers.py
"""Differentiable layer primitives on channel-last batches ``(N, H, W, C)``.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes ``(dout, cache)`` and returns the input gradient followed by the
parameter gradients. All functions keep the dtype of their inputs, so the
same code runs in float64 for training and in extended precision for
finite-difference reference values.
"""

from __future__ import annotations

from typing import Any, Dict, Optional, Tuple

import numpy as np

from rdtrack.exceptions import ConfigError, ShapeError

Cache = Dict[str, Any]


# ──────────────────────────────────────────────────────────────────────────────
# Активации
# ──────────────────────────────────────────────────────────────────────────────
def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu(x):
    """x * sigmoid(x); accepts scalars and arrays."""
    arr = np.asarray(x)
    value = arr * sigmoid(arr)
    return float(value) if value.ndim == 0 else value


def silu_forward(x: np.ndarray) -> Tuple[np.ndarray, Cache]:
    s = sigmoid(x)
    return x * s, {"x": x, "s": s}


def silu_backward(dout: np.ndarray, cache: Cache) -> np.ndarray:
    x, s = cache["x"], cache["s"]
    return dout * (s * (1.0 + x * (1.0 - s)))


# ──────────────────────────────────────────────────────────────────────────────
# Свёртка
# ──────────────────────────────────────────────────────────────────────────────
def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray], stride: int = 1, pad: int = 0
) -> Tuple[np.ndarray, Cache]:
    """Cross-correlation with kernel ``w`` of shape (kh, kw, C_in, C_out), zero padding."""
    if x.ndim != 4 or x.shape[-1] != w.shape[2]:
        raise ShapeError(f"conv input {x.shape} does not match kernel {w.shape}")
    kh, kw, _, c_out = w.shape
    n, h, width, _ = x.shape
    h_out = (h + 2 * pad - kh) // stride + 1
    w_out = (width + 2 * pad - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"conv input {x.shape} is smaller than kernel {w.shape[:2]}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x

    out = np.zeros((n, h_out, w_out, c_out), dtype=np.result_type(x, w))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride, :]
            out += patch @ w[i, j]
    if b is not None:
        out += b
    return out, {"xp": xp, "x_shape": x.shape, "w": w, "has_bias": b is not None, "stride": stride, "pad": pad}


def conv2d_backward(
    dout: np.ndarray, cache: Cache
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    xp, w, stride, pad = cache["xp"], cache["w"], cache["stride"], cache["pad"]
    kh, kw = w.shape[:2]
    _, h_out, w_out, _ = dout.shape
    dxp = np.zeros_like(xp, dtype=np.result_type(xp, dout))
    dw = np.zeros_like(w, dtype=np.result_type(w, dout))
    for i in range(kh):
        for j in range(kw):
            window = (slice(None), slice(i, i + stride * h_out, stride), slice(j, j + stride * w_out, stride))
            dw[i, j] = np.einsum("nhwc,nhwd->cd", xp[window], dout)
            dxp[window] += dout @ w[i, j].T
    _, h, width, _ = cache["x_shape"]
    dx = dxp[:, pad:pad + h, pad:pad + width, :]
    db = dout.sum(axis=(0, 1, 2)) if cache["has_bias"] else None
    return dx, dw, db


def linear_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray]) -> Tuple[np.ndarray, Cache]:
    """Affine map over the last axis (also serves as a 1x1 convolution)."""
    out = x @ w
    if b is not None:
        out = out + b
    return out, {"x": x, "w": w, "has_bias": b is not None}


def linear_backward(dout: np.ndarray, cache: Cache) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    x, w = cache["x"], cache["w"]
    flat_x = x.reshape(-1, x.shape[-1])
    flat_d = dout.reshape(-1, dout.shape[-1])
    dw = flat_x.T @ flat_d
    db = flat_d.sum(axis=0) if cache["has_bias"] else None
    return dout @ w.T, dw, db


# ──────────────────────────────────────────────────────────────────────────────
# Нормализация
# ──────────────────────────────────────────────────────────────────────────────
def _norm_forward(x, gamma, beta, axes, eps):
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, {"xhat": xhat, "inv": inv, "gamma": gamma, "axes": axes}


def _norm_backward(dout, cache, param_axes):
    xhat, inv, gamma, axes = cache["xhat"], cache["inv"], cache["gamma"], cache["axes"]
    dgamma = (dout * xhat).sum(axis=param_axes)
    dbeta = dout.sum(axis=param_axes)
    dxhat = dout * gamma
    dx = inv * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
    return dx, dgamma, dbeta


def instance_norm_forward(x, gamma, beta, eps: float = 1e-5):
    """Per-sample, per-channel normalization over the spatial axes."""
    return _norm_forward(x, gamma, beta, (1, 2), eps)


def instance_norm_backward(dout, cache):
    return _norm_backward(dout, cache, (0, 1, 2))


def layer_norm_forward(x, gamma, beta, eps: float = 1e-5):
    """Normalization over the channel axis of every position."""
    return _norm_forward(x, gamma, beta, (-1,), eps)


def layer_norm_backward(dout, cache):
    return _norm_backward(dout, cache, tuple(range(dout.ndim - 1)))


# ──────────────────────────────────────────────────────────────────────────────
# Позиционное кодирование и окна
# ──────────────────────────────────────────────────────────────────────────────
def positional_encoding(h: int, w: int, c: int) -> np.ndarray:
    """2-D sine/cosine encoding: channels [0, c/2) encode the row, [c/2, c) the column.

    Inside each half, channel 2i is sin(pos * omega_i) and 2i+1 is
    cos(pos * omega_i) with omega_i = 1 / 10000^(2i / (c/2)).
    """
    if c % 4 != 0 or c <= 0:
        raise ConfigError(f"positional encoding needs a channel count divisible by 4, got {c}")
    half = c // 2
    omega = 1.0 / 10000.0 ** (2.0 * np.arange(half // 2) / half)

    def encode(length: int) -> np.ndarray:
        angles = np.arange(length)[:, None] * omega[None, :]
        table = np.empty((length, half))
        table[:, 0::2] = np.sin(angles)
        table[:, 1::2] = np.cos(angles)
        return table

    rows = encode(h)
    cols = encode(w)
    return np.concatenate(
        [np.broadcast_to(rows[:, None, :], (h, w, half)), np.broadcast_to(cols[None, :, :], (h, w, half))],
        axis=-1,
    )


def window_partition(x: np.ndarray, window: int) -> np.ndarray:
    """(N, H, W, C) -> (N * nH * nW, window * window, C)."""
    n, h, w, c = x.shape
    if h % window or w % window:
        raise ShapeError(f"feature map {h}x{w} is not divisible by window {window}")
    blocks = x.reshape(n, h // window, window, w // window, window, c).transpose(0, 1, 3, 2, 4, 5)
    return blocks.reshape(-1, window * window, c)


def window_reverse(windows: np.ndarray, window: int, shape: Tuple[int, int, int, int]) -> np.ndarray:
    n, h, w, c = shape
    blocks = windows.reshape(n, h // window, w // window, window, window, c).transpose(0, 1, 3, 2, 4, 5)
    return blocks.reshape(n, h, w, c)


def cyclic_shift(x: np.ndarray, shift: int) -> np.ndarray:
    """Roll the spatial axes by ``-shift``; ``cyclic_shift(x, -shift)`` undoes it."""
    if shift == 0:
        return x
    return np.roll(x, shift=(-shift, -shift), axis=(1, 2))


# ──────────────────────────────────────────────────────────────────────────────
# Внимание
# ──────────────────────────────────────────────────────────────────────────────
def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def mhsa_forward(x: np.ndarray, params: Dict[str, np.ndarray], heads: int) -> Tuple[np.ndarray, Cache]:
    """Multi-head self-attention over token sets ``x`` of shape (B, T, C).

    ``params`` holds wq, bq, wk, wv, bv, wo, bo; the key projection has no
    bias (a key bias shifts each score row by a constant).
    """
    b, t, c = x.shape
    if c % heads:
        raise ShapeError(f"{c} channels cannot be split into {heads} heads")
    dh = c // heads

    def split(v):
        return v.reshape(b, t, heads, dh).transpose(0, 2, 1, 3)

    q = split(x @ params["wq"] + params["bq"])
    k = split(x @ params["wk"])
    v = split(x @ params["wv"] + params["bv"])
    scale = 1.0 / np.sqrt(dh)
    attn = softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
    context = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, c)
    out = context @ params["wo"] + params["bo"]
    cache = {"x": x, "q": q, "k": k, "v": v, "attn": attn, "context": context, "params": params,
             "heads": heads, "scale": scale}
    return out, cache


def mhsa_backward(dout: np.ndarray, cache: Cache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    x, q, k, v, attn = cache["x"], cache["q"], cache["k"], cache["v"], cache["attn"]
    params, heads, scale = cache["params"], cache["heads"], cache["scale"]
    b, t, c = x.shape
    dh = c // heads
    flat_x = x.reshape(-1, c)

    grads: Dict[str, np.ndarray] = {
        "wo": cache["context"].reshape(-1, c).T @ dout.reshape(-1, c),
        "bo": dout.sum(axis=(0, 1)),
    }
    dcontext = (dout @ params["wo"].T).reshape(b, t, heads, dh).transpose(0, 2, 1, 3)
    dattn = dcontext @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dcontext
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    def merge(g):
        return g.transpose(0, 2, 1, 3).reshape(b, t, c)

    dq, dk, dv = merge(dq), merge(dk), merge(dv)
    grads["wq"] = flat_x.T @ dq.reshape(-1, c)
    grads["bq"] = dq.sum(axis=(0, 1))
    grads["wk"] = flat_x.T @ dk.reshape(-1, c)
    grads["wv"] = flat_x.T @ dv.reshape(-1, c)
    grads["bv"] = dv.sum(axis=(0, 1))
    dx = dq @ params["wq"].T + dk @ params["wk"].T + dv @ params["wv"].T
    return dx, grads


# ──────────────────────────────────────────────────────────────────────────────
# Пулинг
# ──────────────────────────────────────────────────────────────────────────────
def maxpool_forward(x: np.ndarray, size: int = 5) -> Tuple[np.ndarray, Cache]:
    """Stride-1 max pooling, padded with -inf so the output keeps the input size."""
    pad = size // 2
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)), constant_values=-np.inf)
    views = np.stack([xp[:, i:i + h, j:j + w, :] for i in range(size) for j in range(size)])
    arg = views.argmax(axis=0)
    out = np.take_along_axis(views, arg[None], axis=0)[0]
    return out, {"arg": arg, "size": size, "shape": x.shape}


def maxpool_backward(dout: np.ndarray, cache: Cache) -> np.ndarray:
    """Route each output gradient to the first maximal input of its window."""
    arg, size = cache["arg"], cache["size"]
    n, h, w, c = cache["shape"]
    pad = size // 2
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dout.dtype)
    for offset in range(size * size):
        i, j = divmod(offset, size)
        dxp[:, i:i + h, j:j + w, :] += np.where(arg == offset, dout, 0.0)
    return dxp[:, pad:pad + h, pad:pad + w, :]
