"""Tab-separated utterance manifests and the feature store behind them.

One row per utterance, five UTF-8 columns and no header::

    utt_id <TAB> path <TAB> text <TAB> language <TAB> phonemes

``#`` starts a comment line. The comment lines ``# mean`` and ``# std``
followed by a tab and 40 comma-separated floats carry the corpus-level
normalisation statistics. ``path`` is either a ``.wav`` file or a tensor
container holding ``feat/<utt_id>``; relative paths resolve against the
manifest's directory.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from app.errors import DataError
from app.features.frontend import N_MELS, compute_log_mel, read_wav, speed_perturb
from app.nn import checkpoint
from app.text.vocab import label_set_for

logger = logging.getLogger(__name__)

NUM_COLUMNS = 5
FEATURE_PREFIX = 'feat/'


@dataclass(frozen=True)
class ManifestRow:
    utt_id: str
    path: str
    text: str
    language: str
    phonemes: str

    @property
    def phoneme_list(self):
        return self.phonemes.split()

    @property
    def is_wav(self):
        return self.path.lower().endswith('.wav')


@dataclass
class Manifest:
    rows: list = field(default_factory=list)
    mean: np.ndarray = None
    std: np.ndarray = None
    base_dir: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def languages(self):
        return sorted({row.language for row in self.rows})

    def with_rows(self, rows):
        return replace(self, rows=list(rows))

    def filter_languages(self, languages):
        """Rows of the given languages only; an empty selection keeps everything."""
        if not languages:
            return self
        languages = set(languages)
        return self.with_rows(row for row in self.rows if row.language in languages)

    def resolve(self, row):
        path = Path(row.path)
        return path if path.is_absolute() else self.base_dir / path


def _parse_stats(value, line_number, path):
    try:
        stats = np.array([float(v) for v in value.split(',')], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f'{path}:{line_number}: malformed statistics line') from exc
    if stats.shape != (N_MELS,):
        raise DataError(f'{path}:{line_number}: expected {N_MELS} statistics, got {stats.size}')
    return stats


def load_manifest(path, check_paths=True):
    path = Path(path)
    if not path.exists():
        raise DataError(f'manifest not found: {path}')
    manifest = Manifest(base_dir=path.parent)
    seen = set()
    for line_number, line in enumerate(path.read_text(encoding='utf-8').split('\n'), start=1):
        if not line.strip():
            continue
        if line.startswith('#'):
            key, _, value = line[1:].strip().partition('\t')
            if key.strip() in ('mean', 'std'):
                setattr(manifest, key.strip(), _parse_stats(value, line_number, path))
            continue
        fields_ = line.split('\t')
        if len(fields_) != NUM_COLUMNS:
            raise DataError(f'{path}:{line_number}: expected {NUM_COLUMNS} tab-separated fields, '
                            f'got {len(fields_)}')
        row = ManifestRow(*fields_)
        if row.utt_id in seen:
            raise DataError(f'{path}:{line_number}: duplicate utterance id {row.utt_id}')
        seen.add(row.utt_id)
        manifest.rows.append(row)

    if not manifest.rows:
        logger.warning('Manifest %s contains no utterances', path)
        return manifest
    try:
        label_set_for(manifest.languages)
    except DataError as exc:
        raise DataError(f'{path}: {exc}') from exc
    if check_paths:
        for resolved in sorted({manifest.resolve(row) for row in manifest.rows}):
            if not resolved.exists():
                raise DataError(f'{path}: referenced file does not exist: {resolved}')
    logger.info('Loaded %d utterances from %s', len(manifest), path)
    return manifest


def write_manifest(path, manifest):
    lines = []
    if manifest.mean is not None:
        lines.append('# mean\t' + ','.join(repr(float(v)) for v in manifest.mean))
    if manifest.std is not None:
        lines.append('# std\t' + ','.join(repr(float(v)) for v in manifest.std))
    for row in manifest.rows:
        lines.append('\t'.join((row.utt_id, row.path, row.text, row.language, row.phonemes)))
    Path(path).write_text(''.join(f'{line}\n' for line in lines), encoding='utf-8')


def split_train_valid(manifest, fraction=None, seed=0, hours=None, durations=None):
    """Per-language stratified random split into ``(train, valid)``.

    Either ``fraction`` of each language's utterances, or ``hours`` of audio
    per language using ``durations`` (seconds by utterance id) goes to valid.
    """
    if (fraction is None) == (hours is None):
        raise DataError('give exactly one of fraction or hours')
    if fraction is not None and not 0.0 < fraction < 1.0:
        raise DataError(f'validation fraction must lie in (0, 1), got {fraction}')
    rng = np.random.default_rng(seed)
    valid_ids = set()
    for lang in manifest.languages:
        rows = [row for row in manifest.rows if row.language == lang]
        order = rng.permutation(len(rows))
        if fraction is not None:
            count = int(round(fraction * len(rows)))
            valid_ids.update(rows[i].utt_id for i in order[:count])
            continue
        budget, total = hours * 3600.0, sum(durations[row.utt_id] for row in rows)
        if budget > total:
            raise DataError(f'requested {hours} h of validation audio but {lang} has only '
                            f'{total / 3600.0:.3f} h')
        taken = 0.0
        for i in order:
            if taken >= budget:
                break
            valid_ids.add(rows[i].utt_id)
            taken += durations[rows[i].utt_id]
    train = manifest.with_rows(row for row in manifest.rows if row.utt_id not in valid_ids)
    valid = manifest.with_rows(row for row in manifest.rows if row.utt_id in valid_ids)
    return train, valid


class FeatureStore:
    """Loads raw (unnormalised) log-Mel features for manifest rows."""

    def __init__(self, manifest):
        self.manifest = manifest
        self._containers = {}

    def _container(self, path):
        if path not in self._containers:
            self._containers[path] = checkpoint.load(path)
        return self._containers[path]

    def raw(self, row, speed=1.0):
        path = self.manifest.resolve(row)
        if row.is_wav:
            waveform = read_wav(path)
            if speed != 1.0:
                waveform = speed_perturb(waveform, speed)
            return compute_log_mel(waveform, row.utt_id, row.language).frames
        tensors = self._container(path)
        name = FEATURE_PREFIX + row.utt_id
        if name not in tensors:
            raise DataError(f'{path}: no features stored under {name}')
        frames = tensors[name]
        if frames.ndim != 2 or frames.shape[1] != N_MELS:
            raise DataError(f'{name}: expected (T, {N_MELS}) features, got {frames.shape}')
        return frames

    def normalized(self, row, mean, std, speed=1.0):
        return (self.raw(row, speed) - mean) / std


def corpus_statistics(frames_list):
    """Per-dimension mean and standard deviation over all frames, std floored at 1e-5."""
    stacked = np.concatenate([np.asarray(frames) for frames in frames_list], axis=0)
    return stacked.mean(axis=0), np.maximum(stacked.std(axis=0), 1e-5)
