"""16 kHz waveform to 40-dimensional log-Mel features."""

import functools
from dataclasses import dataclass, field

import librosa
import numpy as np
import soundfile as sf

from app.errors import DataError, UtteranceTooShortError

SAMPLE_RATE = 16000
WIN_LENGTH = 400   # 25 ms
HOP_LENGTH = 160   # 10 ms
N_FFT = 512
N_MELS = 40
F_MAX = 8000.0
LOG_FLOOR = 1e-10
SPEED_FACTORS = (0.9, 1.0, 1.1)


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise DataError(f'expected {SAMPLE_RATE} Hz audio, got {self.sample_rate} Hz')
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise DataError('waveform must be a non-empty mono signal')

    def __len__(self):
        return self.samples.size


@dataclass
class FeatureSequence:
    frames: np.ndarray
    utterance_id: str = ''
    language: str = None
    valid_length: int = field(default=None)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.valid_length is None:
            self.valid_length = self.frames.shape[0]

    @property
    def num_frames(self):
        return self.frames.shape[0]


def num_frames(num_samples):
    return 1 + (num_samples - WIN_LENGTH) // HOP_LENGTH


@functools.lru_cache(maxsize=1)
def mel_filterbank():
    """``(40, 257)`` triangular filters on the HTK mel scale, 0-8000 Hz, unnormalised."""
    return librosa.filters.mel(sr=SAMPLE_RATE, n_fft=N_FFT, n_mels=N_MELS, fmin=0.0, fmax=F_MAX,
                               htk=True, norm=None, dtype=np.float64)


@functools.lru_cache(maxsize=1)
def analysis_window():
    return librosa.filters.get_window('hann', WIN_LENGTH, fftbins=True).astype(np.float64)


def mel_center_frequencies():
    return librosa.mel_frequencies(n_mels=N_MELS + 2, fmin=0.0, fmax=F_MAX, htk=True)[1:-1]


def compute_log_mel(waveform, utterance_id='', language=None):
    samples = waveform.samples
    if samples.size < WIN_LENGTH:
        raise UtteranceTooShortError(
            f'utterance shorter than one window: {samples.size} samples < {WIN_LENGTH}')
    frames = np.lib.stride_tricks.sliding_window_view(samples, WIN_LENGTH)[::HOP_LENGTH]
    power = np.abs(np.fft.rfft(frames * analysis_window(), n=N_FFT, axis=-1)) ** 2
    mel = power @ mel_filterbank().T
    return FeatureSequence(np.log(np.maximum(mel, LOG_FLOOR)), utterance_id, language)


def speed_perturb(waveform, factor):
    """Resample by linear interpolation so the output has ``round(N / factor)`` samples."""
    if not any(np.isclose(factor, f) for f in SPEED_FACTORS):
        raise DataError(f'speed factor {factor} not in {SPEED_FACTORS}')
    if np.isclose(factor, 1.0):
        return Waveform(waveform.samples.copy(), waveform.sample_rate)
    n = len(waveform)
    out_len = int(np.round(n / factor))
    positions = np.arange(out_len) * factor
    return Waveform(np.interp(positions, np.arange(n), waveform.samples), waveform.sample_rate)


def normalize(features, mean, std):
    """Apply corpus-level mean/variance normalisation."""
    return FeatureSequence((features.frames - mean) / std, features.utterance_id,
                           features.language, features.valid_length)


def read_wav(path):
    """Read a mono WAV from a path or a binary file object."""
    source = path if hasattr(path, 'read') else str(path)
    try:
        samples, rate = sf.read(source, dtype='float64', always_2d=False)
    except (RuntimeError, sf.SoundFileError) as exc:
        raise DataError(f'cannot read audio {path}: {exc}') from exc
    if samples.ndim != 1:
        raise DataError(f'{path}: expected mono audio, got {samples.shape[1]} channels')
    return Waveform(samples, rate)


def write_wav(path, waveform):
    sf.write(str(path), np.clip(waveform.samples, -1.0, 1.0), waveform.sample_rate,
             subtype='PCM_16')
