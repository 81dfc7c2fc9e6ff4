"""Loading trained runs and decoding/scoring manifests with them."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.config import load_run_config
from app.data.manifest import FeatureStore
from app.decoding.metrics import ScoredUtterance, score_corpus
from app.decoding.search import decode_utterance
from app.errors import CheckpointError, UtteranceTooShortError
from app.features.frontend import compute_log_mel, read_wav
from app.model.asr import DualDecoderASR
from app.nn import checkpoint, no_grad
from app.text.vocab import GraphemeVocab, PhonemeVocab
from app.training.trainer import (CONFIG_FILE, GRAPHEME_VOCAB_FILE, PHONEME_VOCAB_FILE,
                                  STATS_MEAN, STATS_STD)

logger = logging.getLogger(__name__)


@dataclass
class LoadedRun:
    model: DualDecoderASR
    run_config: object
    grapheme_vocab: GraphemeVocab
    phoneme_vocab: PhonemeVocab
    mean: np.ndarray
    std: np.ndarray

    def normalize(self, frames):
        return (np.asarray(frames, dtype=np.float64) - self.mean) / self.std

    def decode_features(self, frames, beam=4, max_len=100, constrain_first=True):
        """Best hypothesis for one ``(T, 40)`` array of raw log-Mel features."""
        features = self.normalize(frames)
        with no_grad():
            enc = self.model.encode(features[None], [features.shape[0]])
            return decode_utterance(self.model, enc, self.grapheme_vocab, beam, max_len,
                                    constrain_first)[0]


def load_run(checkpoint_path):
    """Rebuild the model saved at ``checkpoint_path`` from the files of its run directory."""
    checkpoint_path = Path(checkpoint_path)
    if checkpoint_path.is_dir():
        checkpoint_path = checkpoint_path / 'best.ckpt'
    run_dir = checkpoint_path.parent
    run_config = load_run_config(run_dir / CONFIG_FILE)
    gv = GraphemeVocab.load(run_dir / GRAPHEME_VOCAB_FILE)
    pv = PhonemeVocab.load(run_dir / PHONEME_VOCAB_FILE)
    tensors = checkpoint.load(checkpoint_path)
    model = DualDecoderASR(run_config, len(gv), len(pv), seed=run_config.training.seed)
    try:
        model.load_state_dict(tensors)
    except CheckpointError as exc:
        raise CheckpointError(f'checkpoint {checkpoint_path} does not match its vocabularies '
                              f'or config: {exc}') from exc
    model.eval()
    if STATS_MEAN not in tensors or STATS_STD not in tensors:
        raise CheckpointError(f'checkpoint {checkpoint_path} carries no feature statistics')
    logger.info('Loaded %s (%d graphemes, %d phonemes)', checkpoint_path, len(gv), len(pv))
    return LoadedRun(model, run_config, gv, pv, tensors[STATS_MEAN], tensors[STATS_STD])


def load_input_features(path):
    """Raw features of a WAV file, a ``.npy`` array or a single-tensor container."""
    path = Path(path)
    if path.suffix.lower() == '.wav':
        return compute_log_mel(read_wav(path), path.stem).frames
    if path.suffix.lower() == '.npy':
        return np.load(path)
    tensors = checkpoint.load(path)
    if len(tensors) != 1:
        raise CheckpointError(f'{path}: expected one feature tensor, found {len(tensors)}')
    return next(iter(tensors.values()))


def decode_manifest(run, manifest, beam=4, max_len=100, constrain_first=True, workers=1):
    """Decode every row; results come back ordered by utterance id."""
    store = FeatureStore(manifest)
    labels = set(run.grapheme_vocab.label_ids)

    def decode_row(row):
        try:
            hyp = run.decode_features(store.raw(row), beam, max_len, constrain_first)
        except UtteranceTooShortError as exc:
            logger.warning('%s: %s; scored as an empty hypothesis', row.utt_id, exc)
            return ScoredUtterance(row.utt_id, row.language, row.text, '', None, False, 0.0)
        return ScoredUtterance(row.utt_id, row.language, row.text, hyp.text, hyp.language,
                               hyp.first_emitted() in labels, hyp.log_score)

    rows = sorted(manifest.rows, key=lambda r: r.utt_id)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(decode_row, rows))
    return [decode_row(row) for row in rows]


def evaluate(run, manifest, beam=4, max_len=100, constrain_first=True, workers=1):
    items = decode_manifest(run, manifest, beam, max_len, constrain_first, workers)
    report = score_corpus(items)
    for row in report.rows:
        logger.info('%s: WER %.2f CER %.2f LID %.2f label-first %.2f (%d utts)', row.lang,
                    row.wer, row.cer, row.lid_acc, row.label_first_rate, row.n_utts)
    return report, items
