from app.text.vocab import (GraphemeVocab, PhonemeVocab, TargetBundle, build_vocabs, decode_ids,
                            encode_targets, extract_language)

__all__ = [
    'GraphemeVocab', 'PhonemeVocab', 'TargetBundle', 'build_vocabs', 'decode_ids', 'encode_targets',
    'extract_language',
]
