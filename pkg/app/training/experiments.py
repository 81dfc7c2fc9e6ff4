"""Multi-run experiment drivers: the alpha sweep, the encoder/multitask grid and gradcheck."""

import csv
import io
import logging
import tempfile
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.config import SynthConfig
from app.data.batching import collate, make_example
from app.data.manifest import FeatureStore, load_manifest
from app.data.synth import generate_corpus
from app.decoding.metrics import ALL_LANGUAGES
from app.model.asr import DualDecoderASR
from app.nn.gradcheck import check_gradients
from app.text.vocab import build_vocabs
from app.training.evaluate import evaluate, load_run
from app.training.trainer import Trainer

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(11))
SWEEP_COLUMNS = ('alpha', 'lang', 'wer', 'cer')
COMPARE_COLUMNS = ('system', 'encoder', 'alpha', 'lang', 'wer', 'cer', 'n_seeds')


def _csv(columns, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(columns)
    writer.writerows(rows)
    return out.getvalue()


def train_and_score(run_config, out_dir, eval_manifest, beam, languages=None, workers=1):
    result = Trainer(run_config, out_dir=out_dir, languages=languages).fit()
    manifest = load_manifest(eval_manifest).filter_languages(languages or
                                                             run_config.training.languages)
    report, _ = evaluate(load_run(result.checkpoint_path), manifest, beam=beam,
                         max_len=run_config.decode.max_len, workers=workers)
    return report


def alpha_sweep(run_config, out_dir, alphas=DEFAULT_ALPHAS, beam=4, eval_manifest=None,
                languages=None, workers=1):
    """Train and score one model per alpha with everything else fixed; returns the CSV text."""
    out_dir = Path(out_dir)
    eval_manifest = eval_manifest or run_config.data.valid_manifest
    rows = []
    for alpha in alphas:
        logger.info('Alpha sweep: training with alpha=%.1f', alpha)
        cfg = run_config.replace(loss__alpha=float(alpha))
        report = train_and_score(cfg, out_dir / f'alpha_{alpha:.1f}', eval_manifest, beam,
                                 languages, workers)
        rows.extend([f'{cfg.loss.alpha:.1f}', r.lang, f'{r.wer:.2f}', f'{r.cer:.2f}']
                    for r in report.rows if r.lang != ALL_LANGUAGES)
    text = _csv(SWEEP_COLUMNS, rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / 'alpha_sweep.csv').write_text(text, encoding='utf-8')
    return text


@dataclass(frozen=True)
class System:
    encoder_type: str
    alpha: float

    @property
    def name(self):
        return f'{self.encoder_type}+{"PHN" if self.alpha > 0 else "GRP"}'


def compare(run_config, out_dir, seeds, beam=4, eval_manifest=None, languages=None, workers=1):
    """Mean WER/CER per language for each encoder with and without the phoneme task."""
    out_dir = Path(out_dir)
    eval_manifest = eval_manifest or run_config.data.valid_manifest
    systems = [System(encoder, alpha) for encoder in ('conformer', 'transformer')
               for alpha in (0.0, run_config.loss.alpha)]
    scores = defaultdict(list)
    for system in systems:
        for seed in seeds:
            cfg = run_config.replace(encoder__encoder_type=system.encoder_type,
                                     loss__alpha=system.alpha, training__seed=int(seed))
            run_dir = out_dir / f'{system.encoder_type}_alpha{system.alpha:.1f}_seed{seed}'
            report = train_and_score(cfg, run_dir, eval_manifest, beam, languages, workers)
            for row in report.rows:
                scores[system, row.lang].append((row.wer, row.cer))
    rows = []
    for (system, lang), values in scores.items():
        values = np.asarray(values)
        rows.append([system.name, system.encoder_type, f'{system.alpha:.1f}', lang,
                     f'{values[:, 0].mean():.2f}', f'{values[:, 1].mean():.2f}', len(values)])
    text = _csv(COMPARE_COLUMNS, rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / 'compare.csv').write_text(text, encoding='utf-8')
    return text


def parameter_group(name):
    parts = name.split('/')
    return '/'.join(parts[:2]) if parts[0] == 'enc' else parts[0]


def gradcheck_batch(run_config, num_utterances=2):
    """A micro-batch of synthetic utterances plus the vocabularies it was encoded with."""
    synth = SynthConfig(train_per_language=1, dev_per_language=0, min_phones=2, max_phones=3,
                        seed=run_config.training.seed)
    with tempfile.TemporaryDirectory() as tmp:
        generate_corpus(synth, tmp)
        manifest = load_manifest(Path(tmp) / 'train.tsv')
        store = FeatureStore(manifest)
        pv, gv = build_vocabs(manifest.rows)
        rows = manifest.rows[:num_utterances]
        examples = [make_example(row, store.normalized(row, manifest.mean, manifest.std), gv, pv)
                    for row in rows]
    return collate(examples, gv, pv), gv, pv


def run_gradcheck(run_config, seed=None, max_entries=4, tol=1e-4):
    """Finite-difference check of the full model on one micro-batch.

    Returns the report and the worst relative error per parameter group.
    """
    seed = run_config.training.seed if seed is None else seed
    run_config = run_config.replace(training__seed=seed, encoder__dropout=0.0,
                                    decoder__dropout=0.0)
    batch, gv, pv = gradcheck_batch(run_config)
    model = DualDecoderASR(run_config, len(gv), len(pv), seed=seed)
    model.train()
    report = check_gradients(lambda: model.compute_losses(batch, run_config.loss).l_total,
                             model.named_parameters(), tol=tol, max_entries=max_entries, seed=seed)
    groups = defaultdict(float)
    for name, error in report.errors.items():
        group = parameter_group(name)
        groups[group] = max(groups[group], error)
    return report, dict(groups)
