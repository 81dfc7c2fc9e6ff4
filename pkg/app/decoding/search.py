"""CTC best-path decoding and attention beam search with language-label conditioning."""

from dataclasses import dataclass

import numpy as np

from app.errors import ConfigError
from app.model.losses import BLANK_ID
from app.nn import Tensor, no_grad
from app.nn import functional as F
from app.text.vocab import decode_ids, extract_language


def ctc_greedy(log_probs):
    """Frame-wise argmax, repeats collapsed, blanks dropped."""
    best = np.asarray(log_probs).argmax(axis=-1)
    out, previous = [], None
    for token in best.tolist():
        if token != previous and token != BLANK_ID:
            out.append(token)
        previous = token
    return out


@dataclass
class Hypothesis:
    token_ids: tuple
    log_score: float
    language: str = None
    text: str = ''
    log_prob: float = 0.0
    finished: bool = True

    def first_emitted(self):
        return self.token_ids[1] if len(self.token_ids) > 1 else None


@dataclass
class _Beam:
    tokens: tuple
    log_prob: float
    state: object
    next_log_probs: np.ndarray


def _normalized(log_prob, tokens):
    return log_prob / max(len(tokens) - 1, 1)


def _search(step, beam, max_len, sos_id, eos_id, first_token_ids):
    log_probs, state = step((), None, sos_id)
    active = [_Beam((sos_id,), 0.0, state, log_probs)]
    finished = []
    while active:
        candidates = []
        for index, hyp in enumerate(active):
            scores = hyp.next_log_probs
            allowed = np.arange(scores.size)
            if first_token_ids is not None and len(hyp.tokens) == 1:
                allowed = np.asarray(first_token_ids)
            top = allowed[np.argsort(-scores[allowed], kind='stable')[:beam]]
            candidates.extend((hyp.log_prob + float(scores[t]), index, int(t)) for t in top)
        candidates.sort(key=lambda c: -c[0])

        next_active = []
        for log_prob, index, token in candidates[:beam]:
            tokens = active[index].tokens + (token,)
            if token == eos_id:
                finished.append((tokens, log_prob, True))
            elif len(tokens) >= max_len:
                finished.append((tokens, log_prob, False))
            else:
                scores, state = step(active[index].tokens, active[index].state, token)
                next_active.append(_Beam(tokens, log_prob, state, scores))
        active = next_active

        # Log-probs only fall, so an active prefix ends no higher than lp / (max_len - 1).
        if active and len(finished) >= beam:
            best = max(_normalized(lp, tokens) for tokens, lp, _ in finished)
            if best >= max(hyp.log_prob for hyp in active) / (max_len - 1):
                break
    return finished


def beam_search(scorer, beam, max_len, sos_id, eos_id, first_token_ids=None):
    """Length-normalised beam search over any ``init_state``/``step`` scorer.

    ``scorer.step(state, token)`` returns next-token log-probabilities and a new
    state. Sequences include ``sos`` and count towards ``max_len``; those that
    reach ``max_len`` without ``eos`` are returned unfinished. When
    ``first_token_ids`` is given the first emitted token is restricted to it.

    Every width from 1 to ``beam`` is searched and the hypotheses pooled, so a
    wider beam never returns a worse best score. Scorer steps are cached by
    prefix and shared between the widths.
    Returns ``(tokens, normalised_score, log_prob, finished)`` tuples, best first.
    """
    if beam < 1:
        raise ConfigError(f'beam must be >= 1, got {beam}')
    if max_len < 3:
        raise ConfigError(f'max_len must be >= 3 to fit sos, a language label and eos, got {max_len}')

    cache = {}

    def step(prefix, state, token):
        key = prefix + (token,)
        if key not in cache:
            cache[key] = scorer.step(scorer.init_state() if not prefix else state, token)
        return cache[key]

    pooled = {}
    for width in range(1, beam + 1):
        for tokens, lp, done in _search(step, width, max_len, sos_id, eos_id, first_token_ids):
            pooled[tokens] = (lp, done)

    results = [(tokens, _normalized(lp, tokens), lp, done) for tokens, (lp, done) in pooled.items()]
    results.sort(key=lambda r: -r[1])
    return results


class DecoderScorer:
    """Adapts a :class:`TransformerDecoder` over one encoded utterance to ``beam_search``."""

    def __init__(self, decoder, enc):
        self.decoder = decoder
        self.enc = enc

    def init_state(self):
        return self.decoder.init_state(self.enc)

    def step(self, state, token):
        logits, state = self.decoder.step(state, token)
        return F.log_softmax(Tensor(logits)).data, state


def decode_utterance(model, enc, grapheme_vocab, beam=4, max_len=100, constrain_first=True):
    """Beam-decode one encoded utterance with the grapheme decoder, best first."""
    labels = grapheme_vocab.label_ids if constrain_first else None
    with no_grad():
        results = beam_search(DecoderScorer(model.dec_grp, enc), beam, max_len,
                              grapheme_vocab.sos_id, grapheme_vocab.eos_id, labels)
    return [Hypothesis(token_ids=tokens, log_score=score,
                       language=extract_language(tokens[1:2], grapheme_vocab),
                       text=decode_ids(tokens, grapheme_vocab), log_prob=log_prob,
                       finished=done)
            for tokens, score, log_prob, done in results]
