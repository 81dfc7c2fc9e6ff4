"""Differentiable layer primitives built on :class:`app.nn.tensor.Tensor`.

Ops with a cheap closed-form derivative are implemented as single graph nodes;
everything else is composed from tensor arithmetic.
"""

import numpy as np

from app.errors import ShapeError
from app.nn.tensor import Tensor, _sigmoid, as_tensor, matmul


def softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return Tensor._make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def log_softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return Tensor._make(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def masked_softmax(x, mask, axis=-1):
    """Softmax restricted to positions where ``mask`` is true.

    Disallowed positions get exactly zero weight; a slice with no allowed
    position is all zeros.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    m = np.where(mask, x.data, -np.inf).max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(np.where(mask, x.data - m, -np.inf))
    s = e.sum(axis=axis, keepdims=True)
    y = e / np.where(s > 0, s, 1.0)
    return Tensor._make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def layer_norm(x, gamma, beta, eps=1e-12):
    """Normalise the last axis to zero mean and unit variance, then scale and shift.

    Rows with zero spread normalise to exactly zero, so the output is ``beta``.
    """
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ShapeError(f'layer_norm affine shape {gamma.shape}/{beta.shape} '
                         f'does not match last dimension of {x.shape}')
    a = x.data
    centered = a - a.mean(axis=-1, keepdims=True)
    centered = np.where(np.ptp(a, axis=-1, keepdims=True) == 0, 0.0, centered)
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gam = gamma.data
    lead = tuple(range(a.ndim - 1))

    def backward(g):
        dxhat = g * gam
        gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._make(xhat * gam + beta.data, (x, gamma, beta), backward)


def depthwise_conv1d(x, kernel):
    """Per-channel 1-D convolution over the time axis with "same" zero padding.

    ``x`` is ``(..., T, C)`` and ``kernel`` is ``(K, C)`` with odd ``K``.
    """
    k_size = kernel.shape[0]
    if k_size % 2 == 0:
        raise ShapeError(f'depthwise kernel size must be odd, got {k_size}')
    if kernel.shape[1] != x.shape[-1]:
        raise ShapeError(f'depthwise kernel {kernel.shape} does not match channels of {x.shape}')
    pad = k_size // 2
    steps = x.shape[-2]
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (0, 0)]
    xp = np.pad(x.data, widths)
    w = kernel.data
    out = np.zeros(x.shape)
    for k in range(k_size):
        out += xp[..., k:k + steps, :] * w[k]
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gxp = np.zeros(xp.shape)
        gw = np.zeros(w.shape)
        for k in range(k_size):
            gxp[..., k:k + steps, :] += g * w[k]
            gw[k] = (g * xp[..., k:k + steps, :]).sum(axis=lead)
        return gxp[..., pad:pad + steps, :], gw

    return Tensor._make(out, (x, kernel), backward)


def conv2d(x, weight, bias, stride=2):
    """Unpadded 2-D convolution of ``(B, C_in, H, W)`` by ``(C_out, C_in, kh, kw)``."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f'conv2d shape mismatch: input {x.shape}, weight {weight.shape}')
    _, _, height, width = x.shape
    _, _, kh, kw = weight.shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(f'conv2d input {x.shape} smaller than kernel {weight.shape}')
    a, w = x.data, weight.data

    def window(i, j):
        return (slice(None), slice(None),
                slice(i, i + stride * (out_h - 1) + 1, stride),
                slice(j, j + stride * (out_w - 1) + 1, stride))

    out = np.zeros((a.shape[0], w.shape[0], out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum('bchw,oc->bohw', a[window(i, j)], w[:, :, i, j])
    out += bias.data[None, :, None, None]

    def backward(g):
        ga = np.zeros(a.shape)
        gw = np.zeros(w.shape)
        for i in range(kh):
            for j in range(kw):
                ga[window(i, j)] += np.einsum('bohw,oc->bchw', g, w[:, :, i, j])
                gw[:, :, i, j] = np.einsum('bohw,bchw->oc', g, a[window(i, j)])
        return ga, gw, g.sum(axis=(0, 2, 3))

    return Tensor._make(out, (x, weight, bias), backward)


def glu(x):
    """Gated linear unit: first half of the last axis gated by the sigmoid of the second."""
    if x.shape[-1] % 2:
        raise ShapeError(f'glu needs an even last dimension, got {x.shape}')
    half = x.shape[-1] // 2
    a, b = x.data[..., :half], x.data[..., half:]
    gate = _sigmoid(b)

    def backward(g):
        return (np.concatenate([g * gate, g * a * gate * (1.0 - gate)], axis=-1),)

    return Tensor._make(a * gate, (x,), backward)


def swish(x):
    a = x.data
    s = _sigmoid(a)
    return Tensor._make(a * s, (x,), lambda g: (g * (s + a * s * (1.0 - s)),))


def dropout(x, rate, rng, training=True):
    """Inverted dropout; identity when ``rate`` is 0 or outside training."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    return out if bias is None else out + bias


def embedding(weight, ids):
    return weight[np.asarray(ids, dtype=np.int64)]


def sinusoidal_encoding(length, d_model):
    """Fixed absolute position table ``PE[t, 2i] = sin(t / 10000^(2i/d))``."""
    if d_model % 2:
        raise ShapeError(f'positional encoding needs an even model dimension, got {d_model}')
    position = np.arange(length, dtype=np.float64)[:, None]
    div = np.power(10000.0, np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(position / div)
    table[:, 1::2] = np.cos(position / div)
    return table


def as_mask(lengths, max_len):
    """Boolean ``(B, max_len)`` array, true on valid frames."""
    return np.arange(max_len)[None, :] < np.asarray(lengths)[:, None]


__all__ = [
    'as_mask', 'as_tensor', 'conv2d', 'depthwise_conv1d', 'dropout', 'embedding', 'glu',
    'layer_norm', 'linear', 'log_softmax', 'masked_softmax', 'sinusoidal_encoding', 'softmax',
    'swish',
]
