"""Levenshtein alignment and corpus-level WER, CER and language-ID scoring."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from app.errors import DataError

ALL_LANGUAGES = 'ALL'
REPORT_COLUMNS = ('lang', 'wer', 'cer', 'lid_acc', 'n_utts', 'n_words')


@dataclass(frozen=True)
class EditCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0

    @property
    def distance(self):
        return self.substitutions + self.deletions + self.insertions

    def __add__(self, other):
        return EditCounts(self.substitutions + other.substitutions,
                          self.deletions + other.deletions,
                          self.insertions + other.insertions)


def edit_distance(ref, hyp):
    """Unit-cost Levenshtein alignment of ``hyp`` against ``ref``.

    The backtrace prefers a substitution, then a deletion, then an insertion
    when several moves are optimal.
    """
    ref, hyp = list(ref), list(hyp)
    rows, cols = len(ref) + 1, len(hyp) + 1
    table = np.zeros((rows, cols), dtype=np.int64)
    table[:, 0] = np.arange(rows)
    table[0, :] = np.arange(cols)
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            table[i, j] = min(table[i - 1, j - 1] + cost, table[i - 1, j] + 1, table[i, j - 1] + 1)

    subs = dels = ins = 0
    i, j = len(ref), len(hyp)
    while i or j:
        if i and j and table[i, j] == table[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and table[i, j] == table[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(int(subs), dels, ins)


def words(text):
    return text.split()


def characters(text):
    return [ch for ch in text if not ch.isspace()]


def _error_rate(refs, hyps, split):
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise DataError(f'{len(refs)} references but {len(hyps)} hypotheses')
    counts, total = EditCounts(), 0
    for ref, hyp in zip(refs, hyps):
        ref_units = split(ref)
        counts = counts + edit_distance(ref_units, split(hyp))
        total += len(ref_units)
    if total == 0:
        raise DataError('reference corpus is empty')
    return 100.0 * counts.distance / total, counts, total


def wer(refs, hyps):
    return _error_rate(refs, hyps, words)[0]


def cer(refs, hyps):
    return _error_rate(refs, hyps, characters)[0]


def language_id_accuracy(hyp_languages, ref_languages):
    """Percentage of hypotheses whose language label equals the reference; ``None`` is wrong."""
    hyp_languages, ref_languages = list(hyp_languages), list(ref_languages)
    if not ref_languages:
        return 0.0
    correct = sum(1 for h, r in zip(hyp_languages, ref_languages) if h is not None and h == r)
    return 100.0 * correct / len(ref_languages)


@dataclass
class ScoredUtterance:
    utt_id: str
    language: str
    ref_text: str
    hyp_text: str
    hyp_language: str = None
    label_first: bool = True
    log_score: float = 0.0


@dataclass
class LanguageScore:
    lang: str
    wer: float
    cer: float
    lid_acc: float
    n_utts: int
    n_words: int
    label_first_rate: float = 100.0
    word_errors: EditCounts = field(default_factory=EditCounts)

    def row(self):
        return [self.lang, f'{self.wer:.2f}', f'{self.cer:.2f}', f'{self.lid_acc:.2f}',
                str(self.n_utts), str(self.n_words)]


@dataclass
class ScoreReport:
    rows: list

    def by_language(self):
        return {row.lang: row for row in self.rows}

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow(row.row())
        return out.getvalue()


def _score_group(lang, items):
    refs = [u.ref_text for u in items]
    hyps = [u.hyp_text for u in items]
    word_rate, word_counts, n_words = _error_rate(refs, hyps, words)
    char_rate = _error_rate(refs, hyps, characters)[0]
    lid = language_id_accuracy([u.hyp_language for u in items], [u.language for u in items])
    first = 100.0 * sum(1 for u in items if u.label_first) / len(items)
    return LanguageScore(lang, word_rate, char_rate, lid, len(items), n_words, first, word_counts)


def score_corpus(items):
    """Per-language rows in label order followed by the pooled ``ALL`` row."""
    items = list(items)
    if not items:
        raise DataError('reference corpus is empty')
    languages = sorted({u.language for u in items})
    rows = [_score_group(lang, [u for u in items if u.language == lang]) for lang in languages]
    rows.append(_score_group(ALL_LANGUAGES, items))
    return ScoreReport(rows)


def write_hypotheses(path, items):
    """TSV ``utt_id, language, text, log_score`` sorted by utterance id."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, delimiter='\t', lineterminator='\n')
        for item in sorted(items, key=lambda u: u.utt_id):
            writer.writerow([item.utt_id, item.hyp_language or '', item.hyp_text,
                             f'{item.log_score:.6f}'])
