"""Seeded synthetic three-language corpus with a learnable phone-to-grapheme structure.

Every language draws a subset of a shared phone inventory and maps it
injectively onto its own alphabet; the alphabets are disjoint. An utterance is
a random phone sequence split into words. Its features tile one 40-dim
template per phone, put a silence template between words, add a
per-language offset and Gaussian noise. The whole corpus is a pure function
of :class:`app.config.SynthConfig`.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.data.manifest import FEATURE_PREFIX, Manifest, ManifestRow, corpus_statistics, write_manifest
from app.features.frontend import (HOP_LENGTH, N_MELS, SAMPLE_RATE, WIN_LENGTH, Waveform,
                                   compute_log_mel, mel_center_frequencies, read_wav,
                                   write_wav)
from app.nn import checkpoint
from app.text.vocab import PHONEME_WORD_SEPARATOR, SYNTH_LABELS

logger = logging.getLogger(__name__)

ALPHABETS = (
    'abcdefghijklmnopqrstuvwxyz',
    'αβγδεζηθικλμνξοπρστυφχψω',
    'абвгдежзийклмнопрстуфхцчшщ',
)
SPLITS = ('train', 'dev')


@dataclass(frozen=True)
class SynthLanguage:
    tag: str
    phones: tuple
    grapheme_of: dict
    offset: np.ndarray


@dataclass
class SynthCorpus:
    train: Manifest
    dev: Manifest
    languages: tuple
    templates: np.ndarray
    silence: np.ndarray


def phone_name(index):
    return f'p{index:02d}'


def _draw_languages(cfg, rng):
    languages = []
    for tag, alphabet in zip(SYNTH_LABELS, ALPHABETS):
        phones = tuple(sorted(int(p) for p in rng.choice(cfg.phones_shared, cfg.phones_per_language,
                                                         replace=False)))
        letters = rng.permutation(cfg.graphemes_per_language)[:cfg.phones_per_language]
        grapheme_of = {phone: alphabet[int(letter)] for phone, letter in zip(phones, letters)}
        offset = rng.normal(size=N_MELS) * cfg.language_offset_scale
        languages.append(SynthLanguage(tag, phones, grapheme_of, offset))
    return tuple(languages)


def _draw_words(cfg, language, rng):
    total = int(rng.integers(cfg.min_phones, cfg.max_phones, endpoint=True))
    words = []
    while total > 0:
        size = min(int(rng.integers(cfg.min_word_phones, cfg.max_word_phones, endpoint=True)), total)
        words.append([language.phones[int(i)]
                      for i in rng.integers(0, len(language.phones), size=size)])
        total -= size
    return words


def _render_features(cfg, words, language, templates, silence, rng):
    pieces = []
    for i, word in enumerate(words):
        if i:
            pieces.append(np.tile(silence, (cfg.silence_frames, 1)))
        pieces.extend(np.tile(templates[phone], (cfg.frames_per_phone, 1)) for phone in word)
    frames = np.concatenate(pieces, axis=0) + language.offset
    if cfg.noise_std > 0:
        frames = frames + rng.normal(scale=cfg.noise_std, size=frames.shape)
    return frames


def _render_waveform(cfg, words, language, rng):
    """Per-phone tones on the mel grid plus a per-language hum, silence between words.

    The trailing pad makes the front-end return exactly one frame per 10 ms hop.
    """
    centers = mel_center_frequencies()
    tone_bins = np.linspace(6, N_MELS - 3, cfg.phones_shared).round().astype(int)
    hum = centers[1 + SYNTH_LABELS.index(language.tag)]
    phone_len = cfg.frames_per_phone * HOP_LENGTH
    pieces = []
    for i, word in enumerate(words):
        if i:
            pieces.append(np.zeros(cfg.silence_frames * HOP_LENGTH))
        for phone in word:
            t = np.arange(phone_len) / SAMPLE_RATE
            pieces.append(0.5 * np.sin(2 * np.pi * centers[tone_bins[phone]] * t))
    samples = np.concatenate(pieces + [np.zeros(WIN_LENGTH - HOP_LENGTH)])
    t = np.arange(samples.size) / SAMPLE_RATE
    samples = samples + 0.1 * cfg.language_offset_scale * np.sin(2 * np.pi * hum * t)
    if cfg.noise_std > 0:
        samples = samples + rng.normal(scale=cfg.noise_std * 0.1, size=samples.shape)
    return Waveform(np.clip(samples, -1.0, 1.0))


def generate_corpus(cfg, out_dir):
    """Write ``train.tsv``/``dev.tsv`` and their features under ``out_dir``.

    Features go to ``train.feats``/``dev.feats`` containers, or to one WAV per
    utterance in waveform mode. Both manifests carry the train-set statistics.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    templates = rng.normal(size=(cfg.phones_shared, N_MELS))
    silence = rng.normal(scale=0.1, size=N_MELS)
    languages = _draw_languages(cfg, rng)

    manifests, features = {}, {}
    for split in SPLITS:
        count = cfg.train_per_language if split == 'train' else cfg.dev_per_language
        rows, stored = [], {}
        for language in languages:
            for i in range(count):
                utt_id = f'{language.tag[1:-1]}_{split}_{i:04d}'
                words = _draw_words(cfg, language, rng)
                text = ' '.join(''.join(language.grapheme_of[p] for p in word) for word in words)
                phonemes = f' {PHONEME_WORD_SEPARATOR} '.join(
                    ' '.join(phone_name(p) for p in word) for word in words)
                if cfg.waveform_mode:
                    wav_dir = out_dir / 'wav'
                    wav_dir.mkdir(exist_ok=True)
                    waveform = _render_waveform(cfg, words, language, rng)
                    write_wav(wav_dir / f'{utt_id}.wav', waveform)
                    path = f'wav/{utt_id}.wav'
                    stored[utt_id] = compute_log_mel(read_wav(wav_dir / f'{utt_id}.wav')).frames
                else:
                    path = f'{split}.feats'
                    stored[utt_id] = _render_features(cfg, words, language, templates, silence, rng)
                rows.append(ManifestRow(utt_id, path, text, language.tag, phonemes))
        manifests[split] = Manifest(rows=rows, base_dir=out_dir)
        features[split] = stored

    if features['train']:
        mean, std = corpus_statistics(features['train'].values())
    else:
        mean, std = np.zeros(N_MELS), np.ones(N_MELS)
    for split in SPLITS:
        manifests[split].mean, manifests[split].std = mean, std
        if not cfg.waveform_mode:
            checkpoint.save(out_dir / f'{split}.feats',
                            {FEATURE_PREFIX + k: v for k, v in features[split].items()})
        write_manifest(out_dir / f'{split}.tsv', manifests[split])
    logger.info('Generated synthetic corpus in %s: %d train, %d dev utterances', out_dir,
                len(manifests['train']), len(manifests['dev']))
    return SynthCorpus(manifests['train'], manifests['dev'], languages, templates, silence)
