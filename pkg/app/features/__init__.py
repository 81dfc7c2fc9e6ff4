from app.features.augment import SpecAugmentConfig, spec_augment
from app.features.frontend import (FeatureSequence, Waveform, compute_log_mel, normalize, read_wav,
                                   speed_perturb, write_wav)

__all__ = [
    'FeatureSequence', 'SpecAugmentConfig', 'Waveform', 'compute_log_mel', 'normalize', 'read_wav',
    'spec_augment', 'speed_perturb', 'write_wav',
]
