import logging

import numpy as np
import pytest

from app.config import SynthConfig
from app.data.batching import PAD_ID, make_batches, make_example
from app.data.manifest import (
    FeatureStore, Manifest, ManifestRow, corpus_statistics, load_manifest, split_train_valid,
    write_manifest,
)
from app.data.synth import ALPHABETS, generate_corpus
from app.errors import ConfigError, DataError
from app.nn import checkpoint
from app.text.vocab import PHONEME_WORD_SEPARATOR, SYNTH_LABELS, build_vocabs


def synthetic_rows(per_language):
    rows = []
    for lang, text in zip(SYNTH_LABELS, ('ab ba', 'γδ', 'жз ж')):
        for i in range(per_language):
            rows.append(ManifestRow(f'{lang[1:-1]}_{i:03d}', 'x.feats', text, lang,
                                    f'p01 p02 {PHONEME_WORD_SEPARATOR} p03'))
    return rows


class TestSynthCorpus:
    """The seeded three-language synthetic corpus."""

    def test_same_seed_same_bytes(self, tmp_path, tiny_synth):
        """Generating twice with one seed gives byte-identical files."""
        generate_corpus(tiny_synth, tmp_path / 'a')
        generate_corpus(tiny_synth, tmp_path / 'b')
        for name in ('train.tsv', 'dev.tsv', 'train.feats', 'dev.feats'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_manifests(self, corpus_dir, tiny_synth):
        """Each split has the configured utterances per language with statistics."""
        train = load_manifest(corpus_dir / 'train.tsv')
        dev = load_manifest(corpus_dir / 'dev.tsv')
        assert len(train) == 3 * tiny_synth.train_per_language
        assert len(dev) == 3 * tiny_synth.dev_per_language
        assert train.languages == list(SYNTH_LABELS)
        assert train.mean.shape == (40,)
        assert np.array_equal(train.std, dev.std)

    def test_disjoint_alphabets(self, corpus_dir):
        """Every language writes only letters from its own alphabet."""
        for row in load_manifest(corpus_dir / 'train.tsv'):
            alphabet = ALPHABETS[SYNTH_LABELS.index(row.language)]
            assert set(row.text.replace(' ', '')) <= set(alphabet)
            assert len(row.text.split()) == row.phonemes.count(PHONEME_WORD_SEPARATOR) + 1

    def test_frames_per_phone(self, tmp_path):
        """A single five-phone word at eight frames per phone has 40 frames."""
        cfg = SynthConfig(train_per_language=2, dev_per_language=1, min_phones=5, max_phones=5,
                          min_word_phones=5, max_word_phones=5)
        generate_corpus(cfg, tmp_path)
        store = FeatureStore(load_manifest(tmp_path / 'train.tsv'))
        for row in store.manifest:
            assert store.raw(row).shape == (40, 40)

    def test_noiseless_features_tile_templates(self, tmp_path):
        """Without noise or offsets the features are the phone templates repeated."""
        cfg = SynthConfig(train_per_language=2, dev_per_language=1, min_phones=3, max_phones=3,
                          min_word_phones=3, max_word_phones=3, noise_std=0.0,
                          language_offset_scale=0.0)
        corpus = generate_corpus(cfg, tmp_path)
        store = FeatureStore(corpus.train)
        for row in corpus.train:
            phones = [int(p[1:]) for p in row.phoneme_list]
            expected = np.concatenate([np.tile(corpus.templates[p], (8, 1)) for p in phones])
            assert np.array_equal(store.raw(row), expected)

    def test_injective_phone_map(self, corpus_dir):
        """One phone always maps to one grapheme within a language."""
        seen = {}
        for row in load_manifest(corpus_dir / 'train.tsv'):
            letters = row.text.replace(' ', '')
            phones = [p for p in row.phoneme_list if p != PHONEME_WORD_SEPARATOR]
            for phone, letter in zip(phones, letters):
                assert seen.setdefault((row.language, phone), letter) == letter

    def test_bad_config(self):
        """Fewer graphemes than phones cannot be mapped injectively."""
        with pytest.raises(ConfigError, match='injective'):
            SynthConfig(phones_per_language=8, graphemes_per_language=6)


class TestManifest:
    """Reading and writing tab-separated manifests."""

    def test_three_rows(self, tmp_path):
        """A valid three-row manifest loads in order."""
        path = tmp_path / 'm.tsv'
        write_manifest(path, Manifest(rows=synthetic_rows(1)))
        manifest = load_manifest(path, check_paths=False)
        assert [row.utt_id for row in manifest] == ['L1_000', 'L2_000', 'L3_000']
        assert manifest.rows[1].text == 'γδ'
        assert manifest.mean is None

    def test_statistics_round_trip(self, tmp_path, rng):
        """Mean and std comment lines survive a write and read exactly."""
        path = tmp_path / 'm.tsv'
        mean, std = rng.normal(size=40), rng.uniform(0.5, 2.0, size=40)
        write_manifest(path, Manifest(rows=synthetic_rows(1), mean=mean, std=std))
        manifest = load_manifest(path, check_paths=False)
        assert np.array_equal(manifest.mean, mean)
        assert np.array_equal(manifest.std, std)

    def test_wrong_field_count(self, tmp_path):
        """A four-field line fails and names its line number."""
        path = tmp_path / 'm.tsv'
        path.write_text('a\tx.feats\tab\t[L1]\tp01\nb\tx.feats\tab\t[L1]\n', encoding='utf-8')
        with pytest.raises(DataError, match=r'm\.tsv:2: expected 5'):
            load_manifest(path, check_paths=False)

    def test_duplicate_ids(self, tmp_path):
        """Utterance ids must be unique."""
        path = tmp_path / 'm.tsv'
        path.write_text('a\tx.feats\tab\t[L1]\tp01\na\tx.feats\tba\t[L1]\tp02\n',
                        encoding='utf-8')
        with pytest.raises(DataError, match='duplicate'):
            load_manifest(path, check_paths=False)

    def test_empty_manifest_warns(self, tmp_path, caplog):
        """A manifest with only comments loads empty and logs a warning."""
        path = tmp_path / 'm.tsv'
        path.write_text('# nothing here\n', encoding='utf-8')
        with caplog.at_level(logging.WARNING):
            manifest = load_manifest(path)
        assert len(manifest) == 0
        assert 'contains no utterances' in caplog.text

    def test_missing_referenced_file(self, tmp_path):
        """Paths are checked against the manifest directory."""
        path = tmp_path / 'm.tsv'
        write_manifest(path, Manifest(rows=synthetic_rows(1)))
        with pytest.raises(DataError, match='does not exist'):
            load_manifest(path)

    def test_mixed_label_sets(self, tmp_path):
        """Real and synthetic language tags cannot share a manifest."""
        path = tmp_path / 'm.tsv'
        path.write_text('a\tx.feats\tab\t[L1]\tp01\nb\tx.feats\tab\t[TE]\tp01\n',
                        encoding='utf-8')
        with pytest.raises(DataError):
            load_manifest(path, check_paths=False)

    def test_missing_manifest(self, tmp_path):
        """A missing file is a data error."""
        with pytest.raises(DataError, match='not found'):
            load_manifest(tmp_path / 'nope.tsv')


class TestSplit:
    """Stratified train/valid splits."""

    def test_fraction_per_language(self):
        """A 0.1 fraction of 100 utterances per language puts 10 of each in valid."""
        manifest = Manifest(rows=synthetic_rows(100))
        train, valid = split_train_valid(manifest, fraction=0.1, seed=3)
        for lang in SYNTH_LABELS:
            assert sum(row.language == lang for row in valid) == 10
        train_ids = {row.utt_id for row in train}
        valid_ids = {row.utt_id for row in valid}
        assert not train_ids & valid_ids
        assert train_ids | valid_ids == {row.utt_id for row in manifest}

    def test_seeded(self):
        """The same seed gives the same split."""
        manifest = Manifest(rows=synthetic_rows(20))
        first = split_train_valid(manifest, fraction=0.25, seed=1)[1]
        second = split_train_valid(manifest, fraction=0.25, seed=1)[1]
        assert [r.utt_id for r in first] == [r.utt_id for r in second]

    def test_hours(self):
        """An hours budget stops once each language reaches it."""
        manifest = Manifest(rows=synthetic_rows(10))
        durations = {row.utt_id: 360.0 for row in manifest}
        _, valid = split_train_valid(manifest, hours=0.2, durations=durations)
        assert len(valid) == 3 * 2

    def test_hours_exceed_available(self):
        """Asking for more audio than a language has is a data error."""
        manifest = Manifest(rows=synthetic_rows(2))
        durations = {row.utt_id: 10.0 for row in manifest}
        with pytest.raises(DataError, match='has only'):
            split_train_valid(manifest, hours=1.0, durations=durations)

    @pytest.mark.parametrize('kwargs', [{}, {'fraction': 0.0}, {'fraction': 0.1, 'hours': 1.0}])
    def test_invalid_arguments(self, kwargs):
        """Exactly one of fraction and hours, with fraction in (0, 1)."""
        with pytest.raises(DataError):
            split_train_valid(Manifest(rows=synthetic_rows(2)), **kwargs)


class TestFeatureStore:
    """Loading stored features and corpus statistics."""

    def test_container_lookup(self, tmp_path, rng):
        """Features are read by utterance id from a tensor container."""
        frames = rng.normal(size=(17, 40))
        checkpoint.save(tmp_path / 'x.feats', {'feat/L1_000': frames})
        store = FeatureStore(Manifest(rows=synthetic_rows(1), base_dir=tmp_path))
        assert np.array_equal(store.raw(store.manifest.rows[0]), frames)
        with pytest.raises(DataError, match='no features stored'):
            store.raw(store.manifest.rows[1])

    def test_normalized(self, tmp_path, rng):
        """Normalisation subtracts the mean and divides by the std."""
        frames = rng.normal(size=(12, 40))
        checkpoint.save(tmp_path / 'x.feats', {'feat/L1_000': frames})
        store = FeatureStore(Manifest(rows=synthetic_rows(1), base_dir=tmp_path))
        mean, std = frames.mean(axis=0), np.full(40, 2.0)
        out = store.normalized(store.manifest.rows[0], mean, std)
        assert np.allclose(out, (frames - mean) / 2.0)

    def test_statistics(self, rng):
        """Statistics pool every frame and floor the std."""
        a, b = rng.normal(size=(5, 40)), rng.normal(size=(9, 40))
        b[:, 0] = a[:, 0] = 1.5
        mean, std = corpus_statistics([a, b])
        stacked = np.concatenate([a, b])
        assert np.allclose(mean, stacked.mean(axis=0))
        assert std[0] == 1e-5
        assert np.allclose(std[1:], stacked.std(axis=0)[1:])


class TestBatching:
    """Length-bucketed padded batches."""

    @pytest.fixture
    def examples(self, rng):
        rows = synthetic_rows(15)
        pv, gv = build_vocabs(rows)
        examples = [make_example(row, rng.normal(size=(int(rng.integers(11, 60)), 40)), gv, pv)
                    for row in rows]
        return examples, gv, pv

    def test_batch_sizes(self, examples):
        """45 utterances at batch size 20 give batches of 20, 20 and 5."""
        examples, gv, pv = examples
        batches = make_batches(examples, gv, pv, batch_size=20, shuffle_seed=0)
        assert sorted(len(b) for b in batches) == [5, 20, 20]
        assert sorted(u for b in batches for u in b.utt_ids) == sorted(e.utt_id for e in examples)

    def test_padding_layout(self, examples):
        """Rows sort by length, eos precedes padding and inputs start with sos and a label."""
        examples, gv, pv = examples
        for batch in make_batches(examples, gv, pv, batch_size=8, shuffle_seed=1):
            assert list(batch.lengths) == sorted(batch.lengths, reverse=True)
            assert batch.features.shape == (len(batch), batch.lengths[0], 40)
            for i in range(len(batch)):
                assert np.all(batch.features[i, batch.lengths[i]:] == 0.0)
                out = batch.grapheme_out[i]
                valid = out[out != PAD_ID]
                assert valid[-1] == gv.eos_id
                assert np.all(out[len(valid):] == PAD_ID)
                assert batch.grapheme_in[i, 0] == gv.sos_id
                assert batch.grapheme_in[i, 1] == gv.id_of(batch.languages[i])
                assert valid[0] == gv.id_of(batch.languages[i])
                phones = batch.phoneme_out[i]
                assert phones[phones != PAD_ID][-1] == pv.eos_id

    def test_seeded_order(self, examples):
        """The same shuffle seed gives the same batches."""
        examples, gv, pv = examples
        first = make_batches(examples, gv, pv, batch_size=8, shuffle_seed=5)
        second = make_batches(examples, gv, pv, batch_size=8, shuffle_seed=5)
        assert [b.utt_ids for b in first] == [b.utt_ids for b in second]

    def test_short_utterances_skipped(self, examples, caplog):
        """Utterances under the subsampling minimum are dropped with a warning."""
        examples, gv, pv = examples
        short = make_example(synthetic_rows(1)[0], np.zeros((10, 40)), gv, pv)
        short.utt_id = 'short'
        with caplog.at_level(logging.WARNING):
            batches = make_batches([short, *examples[:3]], gv, pv, batch_size=8, shuffle_seed=0)
        assert 'short' not in [u for b in batches for u in b.utt_ids]
        assert 'Skipping short' in caplog.text
