"""Scaled dot-product multi-head attention and the position-wise feed-forward layer."""

import numpy as np

from app.nn import LayerNorm, Linear, Module, matmul
from app.nn import functional as F


class MultiHeadAttention(Module):
    """``softmax(QK^T / sqrt(d_head) + mask) V`` per head, heads concatenated and projected.

    ``mask`` is boolean and broadcastable to ``(B, H, T_query, T_key)``; false
    entries receive exactly zero weight. The weights of the last call are kept
    in ``self.weights`` for inspection.
    """

    def __init__(self, d_model, num_heads, rng):
        super().__init__()
        self.num_heads = num_heads
        self.d_head = d_model // num_heads
        self.w_q = Linear(d_model, d_model, rng)
        self.w_k = Linear(d_model, d_model, rng)
        self.w_v = Linear(d_model, d_model, rng)
        self.w_o = Linear(d_model, d_model, rng)
        self.weights = None

    def split_heads(self, x):
        batch, steps, _ = x.shape
        return x.reshape(batch, steps, self.num_heads, self.d_head).transpose(0, 2, 1, 3)

    def merge_heads(self, x):
        batch, _, steps, _ = x.shape
        return x.transpose(0, 2, 1, 3).reshape(batch, steps, self.num_heads * self.d_head)

    def project_kv(self, memory):
        return self.split_heads(self.w_k(memory)), self.split_heads(self.w_v(memory))

    def attend(self, query, keys, values, mask=None):
        q = self.split_heads(self.w_q(query))
        scores = matmul(q, keys.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.d_head))
        if mask is None:
            mask = np.ones(scores.shape, dtype=bool)
        probs = F.masked_softmax(scores, mask)
        self.weights = probs.data
        return self.w_o(self.merge_heads(matmul(probs, values)))

    def forward(self, query, memory, mask=None):
        keys, values = self.project_kv(memory)
        return self.attend(query, keys, values, mask)


class FeedForward(Module):
    """Pre-norm position-wise feed-forward: LayerNorm, Linear, swish, Linear."""

    def __init__(self, d_model, hidden, rng, dropout=0.0):
        super().__init__()
        self.norm = LayerNorm(d_model)
        self.w1 = Linear(d_model, hidden, rng)
        self.w2 = Linear(hidden, d_model, rng)
        self.dropout = dropout
        self.rng = rng

    def forward(self, x):
        h = F.swish(self.w1(self.norm(x)))
        return F.dropout(self.w2(h), self.dropout, self.rng, self.training)


def key_mask(lengths, steps):
    """``(B, 1, 1, T)`` mask over valid key frames."""
    return F.as_mask(lengths, steps)[:, None, None, :]


def causal_mask(n):
    """``(n, n)`` mask letting position ``i`` attend to ``j <= i`` only."""
    if n < 1:
        raise ValueError(f'causal mask needs n >= 1, got {n}')
    return np.tril(np.ones((n, n), dtype=bool))
