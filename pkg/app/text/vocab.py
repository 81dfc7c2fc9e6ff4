"""Grapheme and phoneme inventories and target construction.

Id layout is fixed: the four special tags first (blank pinned to 0), then the
language labels (grapheme vocabulary only), then units sorted by code point.
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from app.errors import DataError

logger = logging.getLogger(__name__)

BLANK = '<blank>'
UNK = '<unk>'
SPACE = '<space>'
SOS_EOS = '<sos/eos>'
SPECIALS = (BLANK, UNK, SPACE, SOS_EOS)

REAL_LABELS = ('[TE]', '[TA]', '[GU]')
SYNTH_LABELS = ('[L1]', '[L2]', '[L3]')
LABEL_SETS = (REAL_LABELS, SYNTH_LABELS)
PHONEME_WORD_SEPARATOR = '|'

_LABEL_RE = re.compile(r'^\[[A-Z0-9]+\]$')


def label_set_for(tags):
    """The language-label set that contains every tag in ``tags``."""
    tags = set(tags)
    for labels in LABEL_SETS:
        if tags <= set(labels):
            return labels
    raise DataError(f'unknown language tags: {", ".join(sorted(tags))}')


class Vocab:
    blank_id = 0
    unk_id = 1
    space_id = 2
    sos_id = 3
    eos_id = 3

    def __init__(self, units, language_labels=()):
        self.language_labels = tuple(language_labels)
        self.units = tuple(units)
        self.tokens = SPECIALS + self.language_labels + self.units
        self._index = {token: i for i, token in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise DataError('vocabulary contains duplicate tokens')
        self._label_ids = tuple(self._index[label] for label in self.language_labels)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def id_of(self, token):
        return self._index.get(token, self.unk_id)

    def token(self, token_id):
        if not 0 <= token_id < len(self.tokens):
            raise DataError(f'token id {token_id} out of range for vocabulary of size {len(self)}')
        return self.tokens[token_id]

    @property
    def label_ids(self):
        return self._label_ids

    def is_special(self, token_id):
        return token_id < len(SPECIALS) or token_id in self._label_ids

    def save(self, path):
        Path(path).write_text(''.join(f'{token}\n' for token in self.tokens), encoding='utf-8')

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise DataError(f'vocabulary file not found: {path}')
        tokens = path.read_text(encoding='utf-8').split('\n')
        if tokens and tokens[-1] == '':
            tokens.pop()
        if tuple(tokens[:len(SPECIALS)]) != SPECIALS:
            raise DataError(f'{path}: vocabulary must start with {", ".join(SPECIALS)}')
        rest = tokens[len(SPECIALS):]
        labels = [t for t in rest if _LABEL_RE.match(t)]
        return cls([t for t in rest if not _LABEL_RE.match(t)], labels)


class PhonemeVocab(Vocab):
    pass


class GraphemeVocab(Vocab):
    pass


@dataclass
class TargetBundle:
    grapheme_ids: list
    ctc_ids: list
    phoneme_ids: list
    oov_count: int = 0


def _code_point_order(units):
    return sorted(units, key=lambda unit: [ord(ch) for ch in unit])


def build_vocabs(rows):
    """Derive both vocabularies from manifest rows.

    ``rows`` are objects with ``text``, ``language`` and ``phonemes``
    attributes (see :class:`app.data.manifest.ManifestRow`).
    """
    rows = list(rows)
    if not rows:
        raise DataError('cannot build vocabularies from an empty manifest')
    graphemes, phonemes, tags = set(), set(), set()
    for row in rows:
        graphemes.update(ch for ch in row.text if not ch.isspace())
        phonemes.update(p for p in row.phonemes.split() if p != PHONEME_WORD_SEPARATOR)
        tags.add(row.language)
    labels = label_set_for(tags)
    pv = PhonemeVocab(_code_point_order(phonemes))
    gv = GraphemeVocab(_code_point_order(graphemes), labels)
    logger.info('Built vocabularies: %d graphemes, %d phonemes', len(gv), len(pv))
    return pv, gv


def tokenize_text(text):
    """Characters of ``text`` with a single space token between words."""
    out = []
    for i, word in enumerate(text.split()):
        if i:
            out.append(SPACE)
        out.extend(word)
    return out


def encode_targets(text, phonemes, lang, gv, pv):
    """Decoder, CTC and phoneme targets for one utterance.

    Unknown characters become ``<unk>`` in the decoder targets and are left out of
    the CTC targets, which hold only units and the space token.
    """
    if lang not in gv.language_labels:
        raise DataError(f'language {lang} is not one of {", ".join(gv.language_labels)}')
    chars = [gv.id_of(token) for token in tokenize_text(text)]
    phones = [pv.space_id if p == PHONEME_WORD_SEPARATOR else pv.id_of(p) for p in phonemes]
    oov = chars.count(gv.unk_id) + phones.count(pv.unk_id)
    return TargetBundle(
        grapheme_ids=[gv.sos_id, gv.id_of(lang), *chars, gv.eos_id],
        ctc_ids=[c for c in chars if c != gv.unk_id],
        phoneme_ids=[pv.sos_id, *phones, pv.eos_id],
        oov_count=oov,
    )


def decode_ids(ids, vocab):
    """Render ids as text, dropping special tags and language labels."""
    out = []
    for token_id in ids:
        token = vocab.token(int(token_id))
        if token == SPACE:
            out.append(' ')
        elif not vocab.is_special(int(token_id)):
            out.append(token)
    return ''.join(out)


def decode_phonemes(ids, vocab):
    out = []
    for token_id in ids:
        token = vocab.token(int(token_id))
        if token == SPACE:
            out.append(PHONEME_WORD_SEPARATOR)
        elif not vocab.is_special(int(token_id)):
            out.append(token)
    return ' '.join(out)


def extract_language(ids, gv):
    labels = set(gv.label_ids)
    for token_id in ids:
        if int(token_id) in labels:
            return gv.token(int(token_id))
    return None
