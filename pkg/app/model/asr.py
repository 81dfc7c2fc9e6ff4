"""The dual-decoder model: a shared encoder feeding a CTC head and two decoders."""

import logging

import numpy as np

from app.model.decoder import TransformerDecoder
from app.model.encoder import ConformerEncoder, PaddedBatch
from app.model.losses import ctc_loss, multitask_loss, seq_cross_entropy
from app.nn import Linear, Module
from app.nn import functional as F

logger = logging.getLogger(__name__)


class DualDecoderASR(Module):
    """Encoder, CTC projection, phoneme decoder and grapheme decoder.

    Parameters are named ``enc/...``, ``ctc/...``, ``dec_phn/...`` and
    ``dec_grp/...`` in checkpoints. All weights are drawn from one generator
    seeded with ``seed`` in construction order, so a seed fixes the model.
    """

    def __init__(self, run_config, grapheme_vocab_size, phoneme_vocab_size, seed=0):
        super().__init__()
        self.run_config = run_config
        self.grapheme_vocab_size = grapheme_vocab_size
        self.phoneme_vocab_size = phoneme_vocab_size
        rng = np.random.default_rng(seed)
        self.enc = ConformerEncoder(run_config.encoder, rng)
        self.ctc = Linear(run_config.encoder.d_model, grapheme_vocab_size, rng)
        self.dec_phn = TransformerDecoder(run_config.decoder, phoneme_vocab_size, rng)
        self.dec_grp = TransformerDecoder(run_config.decoder, grapheme_vocab_size, rng)
        logger.debug('Built model with %d parameters',
                     sum(p.size for p in self.parameters()))

    def encode(self, features, lengths):
        return self.enc(PaddedBatch(np.asarray(features, dtype=np.float64),
                                    np.asarray(lengths, dtype=np.int64)))

    def ctc_log_probs(self, enc):
        return F.log_softmax(self.ctc(enc.hidden), axis=-1)

    def branch_losses(self, batch, label_smoothing=0.0):
        """Unweighted ``(l_ctc, l_gr, l_pr)`` for one :class:`app.data.batching.Batch`."""
        enc = self.encode(batch.features, batch.lengths)
        l_ctc = ctc_loss(self.ctc_log_probs(enc), batch.ctc_targets, enc.out_lengths)
        l_gr = seq_cross_entropy(self.dec_grp(batch.grapheme_in, enc), batch.grapheme_out,
                                 label_smoothing=label_smoothing)
        l_pr = seq_cross_entropy(self.dec_phn(batch.phoneme_in, enc), batch.phoneme_out,
                                 label_smoothing=label_smoothing)
        return l_ctc, l_gr, l_pr

    def compute_losses(self, batch, loss_cfg):
        l_ctc, l_gr, l_pr = self.branch_losses(batch, loss_cfg.label_smoothing)
        return multitask_loss(l_ctc, l_gr, l_pr, loss_cfg)
