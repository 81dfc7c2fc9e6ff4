"""SpecAugment time and frequency masking (no time warping)."""

from dataclasses import dataclass

import numpy as np

from app.errors import ConfigError
from app.features.frontend import N_MELS, FeatureSequence


@dataclass(frozen=True)
class SpecAugmentConfig:
    num_freq_masks: int = 2
    max_freq_width: int = 8
    num_time_masks: int = 2
    max_time_width: int = 20
    min_freq_width: int = 0
    min_time_width: int = 0
    seed: int = 0

    def __post_init__(self):
        widths = (self.max_freq_width, self.max_time_width, self.min_freq_width, self.min_time_width)
        if min(widths) < 0 or self.num_freq_masks < 0 or self.num_time_masks < 0:
            raise ConfigError('SpecAugment counts and widths must be non-negative')
        if self.max_freq_width > N_MELS:
            raise ConfigError(f'max_freq_width {self.max_freq_width} exceeds {N_MELS} bins')
        if self.min_freq_width > self.max_freq_width or self.min_time_width > self.max_time_width:
            raise ConfigError('SpecAugment minimum width exceeds maximum width')


def spec_augment(features, cfg):
    """Mask random frequency bands and time spans with the utterance mean.

    Mask positions come from a generator seeded by ``cfg.seed``.
    """
    if cfg.num_freq_masks == 0 and cfg.num_time_masks == 0:
        return features
    frames = features.frames.copy()
    steps, bins = frames.shape
    fill = features.frames.mean()
    rng = np.random.default_rng(cfg.seed)

    for _ in range(cfg.num_freq_masks):
        width = int(rng.integers(cfg.min_freq_width, cfg.max_freq_width, endpoint=True))
        start = int(rng.integers(0, bins - width, endpoint=True))
        frames[:, start:start + width] = fill
    for _ in range(cfg.num_time_masks):
        width = int(rng.integers(min(cfg.min_time_width, steps), min(cfg.max_time_width, steps),
                                 endpoint=True))
        start = int(rng.integers(0, steps - width, endpoint=True))
        frames[start:start + width, :] = fill

    return FeatureSequence(frames, features.utterance_id, features.language, features.valid_length)
