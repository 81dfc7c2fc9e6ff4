"""Autoregressive transformer decoder shared by the phoneme and grapheme branches.

Both branches are instances of :class:`TransformerDecoder`; they differ only in
vocabulary size and parameters.
"""

from dataclasses import dataclass

import numpy as np

from app.errors import DataError, ShapeError
from app.model.attention import FeedForward, MultiHeadAttention, causal_mask, key_mask
from app.nn import Embedding, LayerNorm, Linear, Module, ModuleList, Tensor, concat
from app.nn import functional as F


@dataclass(frozen=True)
class DecoderState:
    """Token prefix plus per-layer self-attention key/value caches.

    ``memory`` holds the cross-attention keys and values of the encoder output,
    computed once per utterance. States are values: ``step`` returns a new one.
    """

    tokens: tuple
    self_cache: tuple
    memory: tuple
    memory_mask: np.ndarray


class DecoderLayer(Module):
    """Pre-norm causal self-attention, cross-attention and feed-forward, each residual."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.self_norm = LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, rng)
        self.cross_norm = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, rng)
        self.ffn = FeedForward(cfg.d_model, cfg.ff_hidden, rng, cfg.dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        h = self.self_norm(x)
        x = x + self.self_attn(h, h, self_mask)
        x = x + self.cross_attn(self.cross_norm(x), memory, cross_mask)
        return x + self.ffn(x)


class TransformerDecoder(Module):
    def __init__(self, cfg, vocab_size, rng):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.scale = np.sqrt(cfg.d_model)
        self.embed = Embedding(vocab_size, cfg.d_model, rng)
        self.layers = ModuleList([DecoderLayer(cfg, rng) for _ in range(cfg.num_layers)])
        self.final_norm = LayerNorm(cfg.d_model)
        self.output = Linear(cfg.d_model, vocab_size, rng)

    def _check_ids(self, tokens):
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise DataError(f'token id out of range for vocabulary of size {self.vocab_size}')
        return tokens

    def _embed(self, tokens, offset=0):
        steps = tokens.shape[1]
        positions = F.sinusoidal_encoding(offset + steps, self.cfg.d_model)[offset:]
        return self.embed(tokens) * self.scale + Tensor(positions)

    def forward(self, tokens, enc):
        """Teacher-forced logits ``(B, U, V)`` for input prefixes ``tokens`` ``(B, U)``."""
        tokens = self._check_ids(tokens)
        if tokens.shape[0] != enc.hidden.shape[0]:
            raise ShapeError(f'decoder batch {tokens.shape[0]} does not match encoder batch '
                             f'{enc.hidden.shape[0]}')
        x = self._embed(tokens)
        self_mask = causal_mask(tokens.shape[1])
        cross_mask = key_mask(enc.out_lengths, enc.hidden.shape[1])
        for layer in self.layers:
            x = layer(x, enc.hidden, self_mask, cross_mask)
        return self.output(self.final_norm(x))

    def init_state(self, enc):
        """Empty state over a single-utterance encoder output."""
        if enc.hidden.shape[0] != 1:
            raise ShapeError('incremental decoding runs one utterance at a time')
        memory = tuple(layer.cross_attn.project_kv(enc.hidden) for layer in self.layers)
        empty = np.zeros((1, self.cfg.num_heads, 0, self.cfg.d_model // self.cfg.num_heads))
        return DecoderState((), tuple((Tensor(empty), Tensor(empty)) for _ in self.layers),
                            memory, key_mask(enc.out_lengths, enc.hidden.shape[1]))

    def step(self, state, token):
        """Feed one token; returns next-token logits ``(V,)`` and the extended state."""
        if any(k.shape[2] != len(state.tokens) for k, _ in state.self_cache):
            raise ShapeError('decoder cache length does not match the token prefix')
        tokens = self._check_ids([[token]])
        x = self._embed(tokens, offset=len(state.tokens))
        caches = []
        for layer, (past_k, past_v), (mem_k, mem_v) in zip(self.layers, state.self_cache,
                                                          state.memory):
            h = layer.self_norm(x)
            k, v = layer.self_attn.project_kv(h)
            keys, values = concat([past_k, k], axis=2), concat([past_v, v], axis=2)
            caches.append((keys, values))
            x = x + layer.self_attn.attend(h, keys, values)
            x = x + layer.cross_attn.attend(layer.cross_norm(x), mem_k, mem_v, state.memory_mask)
            x = x + layer.ffn(x)
        logits = self.output(self.final_norm(x))
        new_state = DecoderState(state.tokens + (int(token),), tuple(caches), state.memory,
                                 state.memory_mask)
        return logits.data[0, -1], new_state
