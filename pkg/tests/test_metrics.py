import csv
import io

import numpy as np
import pytest

from app.decoding.metrics import (
    REPORT_COLUMNS, EditCounts, ScoredUtterance, cer, characters, edit_distance,
    language_id_accuracy, score_corpus, wer, write_hypotheses,
)
from app.errors import DataError


def reference_distance(a, b):
    """Plain two-row Levenshtein distance."""
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        current = [i]
        for j, y in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (x != y)))
        previous = current
    return previous[-1]


def random_words(rng, n):
    return ' '.join(rng.choice(['ka', 'ta', 'na', 'ma', 'pa'], size=n))


class TestEditDistance:
    """Unit-cost Levenshtein alignment."""

    def test_identical(self):
        """Identical sequences have distance 0."""
        assert edit_distance('abc', 'abc') == EditCounts(0, 0, 0)

    def test_kitten_sitting(self):
        """kitten to sitting takes two substitutions and one insertion."""
        counts = edit_distance('kitten', 'sitting')
        assert counts.distance == 3
        assert counts == EditCounts(substitutions=2, deletions=0, insertions=1)

    def test_empty_reference(self):
        """An empty reference makes every hypothesis token an insertion."""
        assert edit_distance([], ['a', 'b', 'c']) == EditCounts(0, 0, 3)
        assert edit_distance(['a', 'b'], []) == EditCounts(0, 2, 0)

    def test_agrees_with_reference_dp(self):
        """1000 random pairs agree with an independent implementation."""
        rng = np.random.default_rng(99)
        for _ in range(1000):
            a = list(rng.integers(0, 4, size=int(rng.integers(0, 9))))
            b = list(rng.integers(0, 4, size=int(rng.integers(0, 9))))
            assert edit_distance(a, b).distance == reference_distance(a, b)

    def test_symmetry_and_triangle(self):
        """Distance is symmetric and obeys the triangle inequality."""
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b, c = (list(rng.integers(0, 3, size=int(rng.integers(0, 7)))) for _ in range(3))
            ab = edit_distance(a, b).distance
            assert ab == edit_distance(b, a).distance
            assert edit_distance(a, c).distance <= ab + edit_distance(b, c).distance

    def test_counts_add(self):
        """Edit counts add field by field."""
        assert EditCounts(1, 2, 3) + EditCounts(4, 5, 6) == EditCounts(5, 7, 9)


class TestErrorRates:
    """Corpus-level WER and CER."""

    def test_one_deletion_of_three(self):
        """"a b c" against "a c" is 33.33% WER."""
        assert wer(['a b c'], ['a c']) == pytest.approx(100.0 / 3)

    def test_perfect(self):
        """Matching hypotheses score 0%."""
        refs = ['ab ba', 'γδ']
        assert wer(refs, refs) == 0.0
        assert cer(refs, refs) == 0.0

    def test_cer_ignores_spaces(self):
        """Character units exclude whitespace."""
        assert characters('ab  c') == ['a', 'b', 'c']
        assert cer(['ab c'], ['abc']) == 0.0
        assert cer(['abcd'], ['abxd']) == 25.0

    def test_corpus_level_aggregation(self, rng):
        """WER is total errors over total reference words, invariant to order."""
        refs = [random_words(rng, int(rng.integers(1, 6))) for _ in range(30)]
        hyps = [random_words(rng, int(rng.integers(0, 6))) for _ in range(30)]
        errors = sum(reference_distance(r.split(), h.split()) for r, h in zip(refs, hyps))
        total = sum(len(r.split()) for r in refs)
        assert wer(refs, hyps) == pytest.approx(100.0 * errors / total)
        order = rng.permutation(30)
        assert wer([refs[i] for i in order], [hyps[i] for i in order]) == \
            pytest.approx(wer(refs, hyps))

    def test_empty_reference_corpus(self):
        """A reference corpus with no words is a data error."""
        with pytest.raises(DataError):
            wer([''], ['a'])

    def test_length_mismatch(self):
        """Reference and hypothesis counts must agree."""
        with pytest.raises(DataError):
            cer(['a', 'b'], ['a'])


class TestLanguageId:
    """Language-identification accuracy."""

    def test_all_correct(self):
        """Matching labels score 100%."""
        assert language_id_accuracy(['[L1]', '[L2]'], ['[L1]', '[L2]']) == 100.0

    def test_missing_label_is_wrong(self):
        """A hypothesis without a label counts as an error."""
        assert language_id_accuracy([None, '[L2]'], ['[L1]', '[L2]']) == 50.0


class TestScoreReport:
    """Per-language report rows and output files."""

    @pytest.fixture
    def items(self):
        return [
            ScoredUtterance('u2', '[L2]', 'γδ δγ', 'γδ', '[L2]', True, -0.5),
            ScoredUtterance('u1', '[L1]', 'ab ba', 'ab ba', '[L1]', True, -0.1),
            ScoredUtterance('u3', '[L1]', 'ba', 'bb', None, False, -2.25),
        ]

    def test_rows(self, items):
        """Languages are sorted and followed by the pooled ALL row."""
        report = score_corpus(items)
        rows = report.by_language()
        assert list(rows) == ['[L1]', '[L2]', 'ALL']
        assert rows['[L1]'].wer == pytest.approx(100.0 / 3)
        assert rows['[L1]'].lid_acc == 50.0
        assert rows['[L1]'].label_first_rate == 50.0
        assert rows['[L2]'].wer == 50.0
        assert rows['ALL'].n_utts == 3
        assert rows['ALL'].n_words == 5
        assert rows['ALL'].word_errors.distance == 2

    def test_csv_schema(self, items):
        """The CSV has the six report columns with two-decimal rates."""
        text = score_corpus(items).to_csv()
        parsed = list(csv.reader(io.StringIO(text)))
        assert tuple(parsed[0]) == REPORT_COLUMNS
        assert parsed[1] == ['[L1]', '33.33', '16.67', '50.00', '2', '3']
        assert '\r' not in text

    def test_empty_corpus(self):
        """Scoring nothing is a data error."""
        with pytest.raises(DataError):
            score_corpus([])

    def test_hypotheses_file(self, tmp_path, items):
        """The hypotheses TSV is sorted by utterance id."""
        write_hypotheses(tmp_path / 'hyp.tsv', items)
        lines = (tmp_path / 'hyp.tsv').read_text(encoding='utf-8').splitlines()
        assert lines == ['u1\t[L1]\tab ba\t-0.100000', 'u2\t[L2]\tγδ\t-0.500000',
                         'u3\t\tbb\t-2.250000']
