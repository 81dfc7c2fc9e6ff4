from app.model.asr import DualDecoderASR
from app.model.attention import MultiHeadAttention, causal_mask, key_mask
from app.model.decoder import DecoderState, TransformerDecoder
from app.model.encoder import MIN_FRAMES, ConformerEncoder, PaddedBatch, subsampled_length
from app.model.losses import (
    LossBreakdown,
    ctc_forward_backward,
    ctc_loss,
    ctc_min_frames,
    multitask_loss,
    seq_cross_entropy,
)

__all__ = [
    'DualDecoderASR', 'MultiHeadAttention', 'causal_mask', 'key_mask', 'DecoderState',
    'TransformerDecoder', 'MIN_FRAMES', 'ConformerEncoder', 'PaddedBatch', 'subsampled_length',
    'LossBreakdown', 'ctc_forward_backward', 'ctc_loss', 'ctc_min_frames', 'multitask_loss',
    'seq_cross_entropy',
]
