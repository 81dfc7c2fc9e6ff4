"""Multitask training loop with plateau scheduling and best-checkpoint selection."""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.config import dump_run_config
from app.data.batching import make_batches, make_example
from app.data.manifest import FeatureStore, corpus_statistics, load_manifest
from app.errors import DataError, NumericalError
from app.features.augment import SpecAugmentConfig, spec_augment
from app.features.frontend import SPEED_FACTORS, FeatureSequence
from app.model.asr import DualDecoderASR
from app.model.encoder import MIN_FRAMES, subsampled_length
from app.model.losses import ctc_min_frames
from app.nn import checkpoint, no_grad
from app.nn.optim import Adam, ReduceLROnPlateau
from app.text.vocab import build_vocabs

logger = logging.getLogger(__name__)

CONFIG_FILE = 'config.ini'
GRAPHEME_VOCAB_FILE = 'graphemes.txt'
PHONEME_VOCAB_FILE = 'phonemes.txt'
BEST_CHECKPOINT = 'best.ckpt'
TRAIN_LOG = 'train_log.csv'
VALID_LOG = 'valid_log.csv'
TRAIN_LOG_COLUMNS = ('epoch', 'step', 'l_ctc', 'l_pr', 'l_gr', 'l_total', 'lr')
VALID_LOG_COLUMNS = ('epoch', 'l_ctc', 'l_pr', 'l_gr', 'l_total', 'lr', 'best')
STATS_MEAN = 'stats/mean'
STATS_STD = 'stats/std'


@dataclass
class TrainResult:
    out_dir: Path
    checkpoint_path: Path
    best_epoch: int
    best_valid_loss: float
    skipped: int
    steps: int


def _fmt(value):
    return f'{value:.6f}'


def alignable(example):
    """Whether the encoder output is long enough to carry the CTC target."""
    frames = example.num_frames
    return frames >= MIN_FRAMES and subsampled_length(frames) >= ctc_min_frames(
        example.targets.ctc_ids)


class Trainer:
    def __init__(self, run_config, train_manifest=None, valid_manifest=None, out_dir=None,
                 languages=None):
        self.run_config = run_config
        data = run_config.data
        self.train_manifest = Path(train_manifest or data.train_manifest)
        self.valid_manifest = Path(valid_manifest or data.valid_manifest)
        self.out_dir = Path(out_dir or data.out_dir)
        self.languages = tuple(languages if languages is not None else
                               run_config.training.languages)
        self.skipped = 0

    # preparation --------------------------------------------------------

    def _examples(self, manifest, store, speed_rng=None):
        examples = []
        for row in manifest:
            speed = 1.0
            if speed_rng is not None and row.is_wav:
                speed = SPEED_FACTORS[int(speed_rng.integers(len(SPEED_FACTORS)))]
            features = store.normalized(row, self.mean, self.std, speed)
            example = make_example(row, features, self.grapheme_vocab, self.phoneme_vocab)
            if not alignable(example):
                if speed_rng is None:
                    self.skipped += 1
                logger.warning('Skipping %s: %d frames cannot carry %d CTC labels', row.utt_id,
                               example.num_frames, len(example.targets.ctc_ids))
                continue
            examples.append(example)
        return examples

    def prepare(self):
        train = load_manifest(self.train_manifest).filter_languages(self.languages)
        valid = load_manifest(self.valid_manifest).filter_languages(self.languages)
        if not len(train):
            raise DataError(f'no training utterances in {self.train_manifest}')
        self.train_rows, self.valid_rows = train, valid
        self.train_store, self.valid_store = FeatureStore(train), FeatureStore(valid)
        self.phoneme_vocab, self.grapheme_vocab = build_vocabs(train.rows)
        if train.mean is not None and train.std is not None:
            self.mean, self.std = train.mean, train.std
        else:
            self.mean, self.std = corpus_statistics(self.train_store.raw(row) for row in train)
        self.train_examples = self._examples(train, self.train_store)
        self.valid_examples = self._examples(valid, self.valid_store)
        if not self.train_examples:
            raise DataError('every training utterance was skipped')
        if self.skipped:
            logger.warning('Skipped %d unusable utterances', self.skipped)

        seed = self.run_config.training.seed
        self.model = DualDecoderASR(self.run_config, len(self.grapheme_vocab),
                                    len(self.phoneme_vocab), seed=seed)
        opt = self.run_config.optimizer
        self.optimizer = Adam(self.model.parameters(), lr=opt.lr, betas=(opt.beta1, opt.beta2),
                              eps=opt.eps)
        self.scheduler = ReduceLROnPlateau(self.optimizer, factor=opt.plateau_factor,
                                           patience=opt.patience, min_lr=opt.min_lr)
        return self

    def _write_run_files(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / CONFIG_FILE).write_text(dump_run_config(self.run_config), encoding='utf-8')
        self.grapheme_vocab.save(self.out_dir / GRAPHEME_VOCAB_FILE)
        self.phoneme_vocab.save(self.out_dir / PHONEME_VOCAB_FILE)

    def save_checkpoint(self, path):
        tensors = self.model.state_dict()
        tensors[STATS_MEAN] = np.asarray(self.mean)
        tensors[STATS_STD] = np.asarray(self.std)
        checkpoint.save(path, tensors)

    # epochs ---------------------------------------------------------------

    def _augmented(self, epoch):
        aug = self.run_config.augment
        examples = self.train_examples
        if aug.speed_perturb:
            rng = np.random.default_rng([self.run_config.training.seed, epoch, 1])
            examples = self._examples(self.train_rows, self.train_store, speed_rng=rng)
        if not aug.spec_augment:
            return examples
        out = []
        for index, example in enumerate(examples):
            cfg = SpecAugmentConfig(aug.num_freq_masks, aug.max_freq_width, aug.num_time_masks,
                                    aug.max_time_width,
                                    seed=(self.run_config.training.seed * 1_000_003
                                          + epoch * 10_007 + index))
            masked = spec_augment(FeatureSequence(example.features), cfg).frames
            out.append(type(example)(example.utt_id, example.language, masked, example.targets))
        return out

    def train_epoch(self, epoch, writer):
        training = self.run_config.training
        loss_cfg = self.run_config.loss
        self.model.train()
        batches = make_batches(self._augmented(epoch), self.grapheme_vocab, self.phoneme_vocab,
                               training.batch_size, training.seed + epoch, training.bucket_factor)
        for step, batch in enumerate(batches):
            self.optimizer.zero_grad()
            try:
                breakdown = self.model.compute_losses(batch, loss_cfg)
                breakdown.l_total.backward()
            except NumericalError as exc:
                raise NumericalError(f'non-finite loss at epoch {epoch} step {step} '
                                     f'(utterances {", ".join(batch.utt_ids)}): {exc}') from exc
            self.optimizer.step()
            values = breakdown.values()
            writer.writerow([epoch, self.steps] + [_fmt(values[k]) for k in
                                                   ('l_ctc', 'l_pr', 'l_gr', 'l_total')]
                            + [repr(self.optimizer.lr)])
            self.steps += 1
        return len(batches)

    def validate(self):
        examples = self.valid_examples or self.train_examples
        training = self.run_config.training
        batches = make_batches(examples, self.grapheme_vocab, self.phoneme_vocab,
                               training.batch_size, training.seed, training.bucket_factor)
        self.model.eval()
        totals = dict.fromkeys(('l_ctc', 'l_pr', 'l_gr', 'l_total'), 0.0)
        count = 0
        with no_grad():
            for batch in batches:
                values = self.model.compute_losses(batch, self.run_config.loss).values()
                for key in totals:
                    totals[key] += values[key] * len(batch)
                count += len(batch)
        return {key: value / count for key, value in totals.items()}

    def fit(self):
        if not hasattr(self, 'model'):
            self.prepare()
        self._write_run_files()
        best_path = self.out_dir / BEST_CHECKPOINT
        best_loss, best_epoch = float('inf'), -1
        self.steps = 0
        epochs = self.run_config.training.epochs
        with open(self.out_dir / TRAIN_LOG, 'w', encoding='utf-8', newline='') as train_log, \
                open(self.out_dir / VALID_LOG, 'w', encoding='utf-8', newline='') as valid_log:
            train_writer = csv.writer(train_log, lineterminator='\n')
            valid_writer = csv.writer(valid_log, lineterminator='\n')
            train_writer.writerow(TRAIN_LOG_COLUMNS)
            valid_writer.writerow(VALID_LOG_COLUMNS)
            for epoch in range(epochs):
                self.train_epoch(epoch, train_writer)
                valid = self.validate()
                lr = self.optimizer.lr
                improved = valid['l_total'] < best_loss
                if improved:
                    best_loss, best_epoch = valid['l_total'], epoch
                    self.save_checkpoint(best_path)
                valid_writer.writerow([epoch] + [_fmt(valid[k]) for k in
                                                 ('l_ctc', 'l_pr', 'l_gr', 'l_total')]
                                      + [repr(lr), int(improved)])
                logger.info('Epoch %d/%d: valid l_total %.4f (ctc %.4f, gr %.4f, pr %.4f) lr %.3g%s',
                            epoch + 1, epochs, valid['l_total'], valid['l_ctc'], valid['l_gr'],
                            valid['l_pr'], lr, ' *' if improved else '')
                self.scheduler.step(valid['l_total'])
        return TrainResult(self.out_dir, best_path, best_epoch, best_loss, self.skipped, self.steps)
