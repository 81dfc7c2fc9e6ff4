import csv

import numpy as np
import pytest

from app.config import load_run_config
from app.data.manifest import load_manifest
from app.decoding.metrics import REPORT_COLUMNS
from app.errors import CheckpointError, DataError
from app.nn import checkpoint
from app.training import Trainer, decode_manifest, evaluate, load_run
from app.training.evaluate import load_input_features
from app.training.trainer import TRAIN_LOG_COLUMNS, VALID_LOG_COLUMNS


def read_csv(path):
    with open(path, encoding='utf-8', newline='') as handle:
        return list(csv.reader(handle))


class TestTrainer:
    """Short training runs on the synthetic corpus."""

    def test_run_directory(self, desk_config_path):
        """Training writes the config, both vocabularies, both logs and the best checkpoint."""
        result = Trainer(load_run_config(desk_config_path)).fit()
        out = result.out_dir
        for name in ('config.ini', 'graphemes.txt', 'phonemes.txt', 'best.ckpt',
                     'train_log.csv', 'valid_log.csv'):
            assert (out / name).exists(), name
        assert result.checkpoint_path == out / 'best.ckpt'
        assert 0 <= result.best_epoch < 2
        assert np.isfinite(result.best_valid_loss)

        train_log = read_csv(out / 'train_log.csv')
        assert tuple(train_log[0]) == TRAIN_LOG_COLUMNS
        assert len(train_log) - 1 == result.steps
        lrs = [float(row[-1]) for row in train_log[1:]]
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))

        valid_log = read_csv(out / 'valid_log.csv')
        assert tuple(valid_log[0]) == VALID_LOG_COLUMNS
        assert [row[0] for row in valid_log[1:]] == ['0', '1']
        assert valid_log[1][-1] == '1'

    def test_checkpoint_holds_statistics(self, desk_config_path):
        """The best checkpoint carries the feature statistics with the weights."""
        result = Trainer(load_run_config(desk_config_path)).fit()
        tensors = checkpoint.load(result.checkpoint_path)
        assert tensors['stats/mean'].shape == (40,)
        assert any(name.startswith('dec_grp/') for name in tensors)

    def test_deterministic(self, desk_config_path, tmp_path):
        """The same config and seed give byte-identical checkpoints and logs."""
        cfg = load_run_config(desk_config_path).replace(training__epochs=1)
        first = Trainer(cfg, out_dir=tmp_path / 'a').fit()
        second = Trainer(cfg, out_dir=tmp_path / 'b').fit()
        assert first.checkpoint_path.read_bytes() == second.checkpoint_path.read_bytes()
        for name in ('train_log.csv', 'valid_log.csv'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_alpha_zero_freezes_phoneme_decoder(self, desk_config_path):
        """With alpha 0 the phoneme decoder keeps its initial weights."""
        cfg = load_run_config(desk_config_path).replace(loss__alpha=0.0, training__epochs=1)
        trainer = Trainer(cfg).prepare()
        before = trainer.model.state_dict()
        trainer.fit()
        after = trainer.model.state_dict()
        phoneme = [k for k in before if k.startswith('dec_phn/')]
        assert phoneme
        assert all(np.array_equal(before[k], after[k]) for k in phoneme)
        assert not np.array_equal(before['ctc/weight'], after['ctc/weight'])

    def test_language_filter(self, desk_config_path):
        """Restricting languages trains on those rows only."""
        cfg = load_run_config(desk_config_path).replace(training__epochs=1)
        trainer = Trainer(cfg, languages=('[L2]',)).prepare()
        assert {e.language for e in trainer.train_examples} == {'[L2]'}

    def test_no_training_rows(self, desk_config_path):
        """A filter that keeps nothing is a data error."""
        cfg = load_run_config(desk_config_path)
        with pytest.raises(DataError, match='no training utterances'):
            Trainer(cfg, languages=('[L9]',)).prepare()


class TestEvaluate:
    """Reloading a run and scoring a manifest with it."""

    def test_load_run(self, trained_run):
        """A run directory reloads into the same weights."""
        result, _ = trained_run
        run = load_run(result.out_dir)
        stored = checkpoint.load(result.checkpoint_path)
        for name, tensor in run.model.state_dict().items():
            assert np.array_equal(tensor, stored[name])
        assert np.array_equal(run.mean, stored['stats/mean'])
        assert not run.model.training

    def test_report(self, trained_run):
        """Evaluation reports every language plus ALL with finite rates."""
        result, corpus = trained_run
        run = load_run(result.checkpoint_path)
        report, items = evaluate(run, load_manifest(corpus / 'dev.tsv'), beam=2, max_len=12)
        rows = report.by_language()
        assert list(rows) == ['[L1]', '[L2]', '[L3]', 'ALL']
        assert rows['ALL'].n_utts == len(items) == 6
        assert all(0.0 <= row.cer for row in rows.values())
        assert report.to_csv().splitlines()[0] == ','.join(REPORT_COLUMNS)
        assert [i.utt_id for i in items] == sorted(i.utt_id for i in items)

    def test_constrained_decoding_is_labelled(self, trained_run):
        """Constrained hypotheses always start with a language label."""
        result, corpus = trained_run
        run = load_run(result.checkpoint_path)
        items = decode_manifest(run, load_manifest(corpus / 'dev.tsv'), beam=2, max_len=10)
        assert all(item.label_first and item.hyp_language for item in items)

    def test_parallel_matches_serial(self, trained_run):
        """Worker threads give the same hypotheses as a serial pass."""
        result, corpus = trained_run
        run = load_run(result.checkpoint_path)
        manifest = load_manifest(corpus / 'dev.tsv')
        serial = decode_manifest(run, manifest, beam=2, max_len=8)
        parallel = decode_manifest(run, manifest, beam=2, max_len=8, workers=3)
        assert serial == parallel

    def test_vocabulary_mismatch(self, trained_run, tmp_path):
        """A checkpoint paired with other vocabularies fails to load."""
        result, _ = trained_run
        for name in ('config.ini', 'phonemes.txt', 'best.ckpt'):
            (tmp_path / name).write_bytes((result.out_dir / name).read_bytes())
        lines = (result.out_dir / 'graphemes.txt').read_text(encoding='utf-8').splitlines()
        (tmp_path / 'graphemes.txt').write_text('\n'.join(lines + ['ÿ']) + '\n',
                                                encoding='utf-8')
        with pytest.raises(CheckpointError, match='does not match'):
            load_run(tmp_path)

    def test_input_features(self, tmp_path, rng):
        """Decode inputs may be .npy arrays or single-tensor containers."""
        frames = rng.normal(size=(30, 40))
        np.save(tmp_path / 'x.npy', frames)
        checkpoint.save(tmp_path / 'x.feats', {'feat/x': frames})
        assert np.array_equal(load_input_features(tmp_path / 'x.npy'), frames)
        assert np.array_equal(load_input_features(tmp_path / 'x.feats'), frames)
        checkpoint.save(tmp_path / 'y.feats', {'a': frames, 'b': frames})
        with pytest.raises(CheckpointError):
            load_input_features(tmp_path / 'y.feats')
