"""Padded training batches built from manifest rows."""

import logging
from dataclasses import dataclass

import numpy as np

from app.model.encoder import MIN_FRAMES
from app.text.vocab import encode_targets

logger = logging.getLogger(__name__)

PAD_ID = -1


@dataclass
class Example:
    utt_id: str
    language: str
    features: np.ndarray
    targets: object

    @property
    def num_frames(self):
        return self.features.shape[0]


@dataclass
class Batch:
    """Features padded with zeros, decoder targets padded with ``PAD_ID``.

    Decoder inputs are the target sequences without their final token and are
    padded with eos; outputs drop the leading sos. Rows are sorted by
    descending frame count.
    """

    utt_ids: list
    languages: list
    features: np.ndarray
    lengths: np.ndarray
    ctc_targets: list
    grapheme_in: np.ndarray
    grapheme_out: np.ndarray
    phoneme_in: np.ndarray
    phoneme_out: np.ndarray

    def __len__(self):
        return len(self.utt_ids)


def make_example(row, features, grapheme_vocab, phoneme_vocab):
    targets = encode_targets(row.text, row.phoneme_list, row.language, grapheme_vocab,
                             phoneme_vocab)
    if targets.oov_count:
        logger.warning('%s: %d out-of-vocabulary units mapped to <unk>', row.utt_id,
                       targets.oov_count)
    return Example(row.utt_id, row.language, np.asarray(features, dtype=np.float64), targets)


def _pad(sequences, fill):
    out = np.full((len(sequences), max(len(s) for s in sequences)), fill, dtype=np.int64)
    for i, seq in enumerate(sequences):
        out[i, :len(seq)] = seq
    return out


def collate(examples, grapheme_vocab, phoneme_vocab):
    examples = sorted(examples, key=lambda e: -e.num_frames)
    lengths = np.array([e.num_frames for e in examples], dtype=np.int64)
    features = np.zeros((len(examples), int(lengths.max()), examples[0].features.shape[1]))
    for i, example in enumerate(examples):
        features[i, :example.num_frames] = example.features
    graphemes = [e.targets.grapheme_ids for e in examples]
    phonemes = [e.targets.phoneme_ids for e in examples]
    return Batch(
        utt_ids=[e.utt_id for e in examples],
        languages=[e.language for e in examples],
        features=features,
        lengths=lengths,
        ctc_targets=[list(e.targets.ctc_ids) for e in examples],
        grapheme_in=_pad([g[:-1] for g in graphemes], grapheme_vocab.eos_id),
        grapheme_out=_pad([g[1:] for g in graphemes], PAD_ID),
        phoneme_in=_pad([p[:-1] for p in phonemes], phoneme_vocab.eos_id),
        phoneme_out=_pad([p[1:] for p in phonemes], PAD_ID),
    )


def make_batches(examples, grapheme_vocab, phoneme_vocab, batch_size, shuffle_seed,
                 bucket_factor=4):
    """Seeded shuffle, then length-sorted buckets cut into batches in shuffled order.

    Utterances too short for the encoder's subsampling are skipped.
    """
    kept = []
    for example in examples:
        if example.num_frames < MIN_FRAMES:
            logger.warning('Skipping %s: %d frames < %d required by subsampling',
                           example.utt_id, example.num_frames, MIN_FRAMES)
            continue
        kept.append(example)
    if not kept:
        return []

    rng = np.random.default_rng(shuffle_seed)
    order = [kept[i] for i in rng.permutation(len(kept))]
    bucket_size = batch_size * bucket_factor
    batches = []
    for start in range(0, len(order), bucket_size):
        bucket = sorted(order[start:start + bucket_size], key=lambda e: -e.num_frames)
        batches.extend(bucket[i:i + batch_size] for i in range(0, len(bucket), batch_size))
    return [collate(batches[i], grapheme_vocab, phoneme_vocab)
            for i in rng.permutation(len(batches))]
