from app.decoding.metrics import (
    EditCounts,
    ScoredUtterance,
    ScoreReport,
    cer,
    edit_distance,
    language_id_accuracy,
    score_corpus,
    wer,
)
from app.decoding.search import Hypothesis, beam_search, ctc_greedy, decode_utterance

__all__ = [
    'EditCounts', 'ScoredUtterance', 'ScoreReport', 'cer', 'edit_distance',
    'language_id_accuracy', 'score_corpus', 'wer', 'Hypothesis', 'beam_search', 'ctc_greedy',
    'decode_utterance',
]
