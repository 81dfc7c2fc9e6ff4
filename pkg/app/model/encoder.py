"""Convolutional subsampling followed by a stack of conformer (or transformer) blocks."""

from dataclasses import dataclass

import numpy as np

from app.errors import UtteranceTooShortError
from app.model.attention import FeedForward, MultiHeadAttention, key_mask
from app.nn import LayerNorm, Linear, MaskedBatchNorm, Module, ModuleList, Parameter, Tensor
from app.nn import functional as F
from app.nn.module import uniform_fan_in

MIN_FRAMES = 11


def subsampled_length(length):
    """Frames left after two unpadded 3x3 convolutions with stride 2."""
    first = (length - 3) // 2 + 1
    return (first - 3) // 2 + 1


@dataclass
class PaddedBatch:
    """Zero-padded ``(B, T, 40)`` features; after encoding also ``hidden`` and ``out_lengths``."""

    features: np.ndarray
    lengths: np.ndarray
    hidden: Tensor = None
    out_lengths: np.ndarray = None

    @property
    def mask(self):
        return F.as_mask(self.out_lengths, self.hidden.shape[1])

    def select(self, index):
        """Single-utterance view of the encoder output, trimmed to its valid length."""
        length = int(self.out_lengths[index])
        return PaddedBatch(self.features[index:index + 1, :self.lengths[index]],
                           self.lengths[index:index + 1],
                           Tensor(self.hidden.data[index:index + 1, :length]),
                           self.out_lengths[index:index + 1])


class ConvSubsampling(Module):
    def __init__(self, input_dim, d_model, rng):
        super().__init__()
        self.conv1_weight = Parameter(uniform_fan_in(rng, 9, (d_model, 1, 3, 3)))
        self.conv1_bias = Parameter(np.zeros(d_model))
        self.conv2_weight = Parameter(uniform_fan_in(rng, 9 * d_model, (d_model, d_model, 3, 3)))
        self.conv2_bias = Parameter(np.zeros(d_model))
        self.freq_bins = subsampled_length(input_dim)
        self.out = Linear(d_model * self.freq_bins, d_model, rng)

    def forward(self, batch):
        lengths = np.asarray(batch.lengths)
        short = lengths < MIN_FRAMES
        if short.any():
            raise UtteranceTooShortError(
                f'utterance too short after subsampling: {int(lengths[short].min())} frames '
                f'< {MIN_FRAMES}')
        x = Tensor(np.asarray(batch.features)[:, None, :, :])
        h = F.swish(F.conv2d(x, self.conv1_weight, self.conv1_bias))
        h = F.conv2d(h, self.conv2_weight, self.conv2_bias)
        size, channels, steps, bins = h.shape
        h = h.transpose(0, 2, 1, 3).reshape(size, steps, channels * bins)
        return self.out(h), np.array([subsampled_length(int(n)) for n in lengths])


class ConvolutionModule(Module):
    """LayerNorm, pointwise x2, GLU, depthwise conv, norm, swish, pointwise."""

    def __init__(self, cfg, rng):
        super().__init__()
        d = cfg.d_model
        self.norm = LayerNorm(d)
        self.pointwise1 = Linear(d, cfg.conv_expansion * d, rng)
        self.depthwise = Parameter(uniform_fan_in(rng, cfg.conv_kernel, (cfg.conv_kernel, d)))
        self.batch_norm = cfg.conv_norm == 'batch'
        self.conv_norm = MaskedBatchNorm(d) if self.batch_norm else LayerNorm(d)
        self.pointwise2 = Linear(d, d, rng)

    def forward(self, x, mask):
        keep = Tensor(mask[..., None].astype(np.float64))
        h = F.glu(self.pointwise1(self.norm(x))) * keep
        h = F.depthwise_conv1d(h, self.depthwise)
        h = self.conv_norm(h, mask) if self.batch_norm else self.conv_norm(h)
        h = self.pointwise2(F.swish(h))
        return h * keep


class ConformerBlock(Module):
    """Macaron block: half FFN, self-attention, convolution, half FFN, final LayerNorm."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.ffn1 = FeedForward(cfg.d_model, cfg.ff_hidden, rng, cfg.dropout)
        self.mhsa_norm = LayerNorm(cfg.d_model)
        self.mhsa = MultiHeadAttention(cfg.d_model, cfg.num_heads, rng)
        self.conv = ConvolutionModule(cfg, rng)
        self.ffn2 = FeedForward(cfg.d_model, cfg.ff_hidden, rng, cfg.dropout)
        self.final_norm = LayerNorm(cfg.d_model)

    def forward(self, x, mask):
        lengths = mask.sum(axis=1)
        keep = Tensor(mask[..., None].astype(np.float64))
        x = x + self.ffn1(x) * 0.5
        h = self.mhsa_norm(x)
        x = x + self.mhsa(h, h, key_mask(lengths, x.shape[1]))
        x = x + self.conv(x * keep, mask)
        x = x + self.ffn2(x) * 0.5
        return self.final_norm(x) * keep


class TransformerBlock(Module):
    """Self-attention and a full feed-forward step, without the convolution module."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.mhsa_norm = LayerNorm(cfg.d_model)
        self.mhsa = MultiHeadAttention(cfg.d_model, cfg.num_heads, rng)
        self.ffn = FeedForward(cfg.d_model, cfg.ff_hidden, rng, cfg.dropout)
        self.final_norm = LayerNorm(cfg.d_model)

    def forward(self, x, mask):
        lengths = mask.sum(axis=1)
        keep = Tensor(mask[..., None].astype(np.float64))
        h = self.mhsa_norm(x)
        x = x + self.mhsa(h, h, key_mask(lengths, x.shape[1]))
        x = x + self.ffn(x)
        return self.final_norm(x) * keep


class ConformerEncoder(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        self.subsample = ConvSubsampling(cfg.input_dim, cfg.d_model, rng)
        block = ConformerBlock if cfg.encoder_type == 'conformer' else TransformerBlock
        self.blocks = ModuleList([block(cfg, rng) for _ in range(cfg.num_blocks)], prefix='block')

    def forward(self, batch):
        hidden, out_lengths = self.subsample(batch)
        steps = hidden.shape[1]
        mask = F.as_mask(out_lengths, steps)
        keep = Tensor(mask[..., None].astype(np.float64))
        hidden = (hidden + Tensor(F.sinusoidal_encoding(steps, self.cfg.d_model))) * keep
        for block in self.blocks:
            hidden = block(hidden, mask)
        return PaddedBatch(batch.features, np.asarray(batch.lengths), hidden, out_lengths)
