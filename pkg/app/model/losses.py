"""CTC, sequence cross-entropy and their weighted multitask combination.

The combined objective is ``L = lambda * L_ctc + (1 - lambda) * L_gr + alpha * L_pr``,
applied literally: the three weights need not sum to one.
"""

from dataclasses import dataclass

import numpy as np

from app.errors import DataError, UnalignableTargetError
from app.nn import Tensor
from app.nn import functional as F
from app.nn.tensor import as_tensor

BLANK_ID = 0
IGNORE_ID = -1


def ctc_min_frames(target):
    """Frames needed to emit ``target``: one per label plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _extend_with_blanks(target):
    ext = np.full(2 * len(target) + 1, BLANK_ID, dtype=np.int64)
    ext[1::2] = target
    skip = np.zeros(ext.size, dtype=bool)
    skip[2:] = (ext[2:] != BLANK_ID) & (ext[2:] != ext[:-2])
    return ext, skip


def ctc_forward_backward(log_probs, target):
    """Negative log-likelihood of ``target`` and its gradient w.r.t. ``log_probs`` ``(T, V)``."""
    target = [int(t) for t in target]
    steps = log_probs.shape[0]
    if BLANK_ID in target:
        raise DataError('CTC target must not contain the blank id')
    if steps < ctc_min_frames(target):
        raise UnalignableTargetError(
            f'target unalignable: {len(target)} labels need {ctc_min_frames(target)} frames, '
            f'got {steps}')
    ext, skip = _extend_with_blanks(target)
    states = ext.size
    lp = log_probs[:, ext]

    alpha = np.full((steps, states), -np.inf)
    alpha[0, :min(2, states)] = lp[0, :min(2, states)]
    for t in range(1, steps):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + lp[t]

    beta = np.full((steps, states), -np.inf)
    beta[-1, -min(2, states):] = lp[-1, -min(2, states):]
    for t in range(steps - 2, -1, -1):
        nxt = beta[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(skip[2:], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b + lp[t]

    log_z = np.logaddexp.reduce(alpha[-1, -min(2, states):])
    occupancy = np.exp(alpha + beta - lp - log_z)
    grad = np.zeros_like(log_probs)
    np.add.at(grad, (np.arange(steps)[:, None], ext[None, :]), -occupancy)
    return -log_z, grad


def ctc_loss(log_probs, targets, input_lengths=None):
    """Batch-mean CTC loss over ``(B, T, V)`` log-probabilities (or one ``(T, V)`` utterance)."""
    single = log_probs.ndim == 2
    data = log_probs.data[None] if single else log_probs.data
    if single:
        targets = [targets]
    if input_lengths is None:
        input_lengths = [data.shape[1]] * data.shape[0]
    total = 0.0
    grad = np.zeros_like(data)
    for b, (target, length) in enumerate(zip(targets, input_lengths)):
        nll, g = ctc_forward_backward(data[b, :int(length)], target)
        total += nll
        grad[b, :int(length)] = g
    count = data.shape[0]
    grad /= count
    if single:
        grad = grad[0]
    return Tensor._make(np.array(total / count), (log_probs,), lambda g: (g * grad,))


def seq_cross_entropy(logits, targets, pad_id=IGNORE_ID, label_smoothing=0.0):
    """Mean token negative log-likelihood over non-padded positions."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:2] != targets.shape:
        raise DataError(f'logits {logits.shape} and targets {targets.shape} disagree')
    rows, cols = np.nonzero(targets != pad_id)
    if rows.size == 0:
        raise DataError('every target position is padding')
    log_probs = F.log_softmax(logits, axis=-1)
    nll = -log_probs[rows, cols, targets[rows, cols]].sum() / float(rows.size)
    if label_smoothing == 0.0:
        return nll
    uniform = -log_probs[rows, cols].sum() / float(rows.size * logits.shape[-1])
    return nll * (1.0 - label_smoothing) + uniform * label_smoothing


@dataclass
class LossBreakdown:
    l_ctc: Tensor
    l_pr: Tensor
    l_gr: Tensor
    l_total: Tensor

    def values(self):
        return {name: getattr(self, name).item() for name in ('l_ctc', 'l_pr', 'l_gr', 'l_total')}


def multitask_loss(l_ctc, l_gr, l_pr, cfg):
    l_ctc, l_gr, l_pr = as_tensor(l_ctc), as_tensor(l_gr), as_tensor(l_pr)
    total = l_ctc * cfg.lam + l_gr * (1.0 - cfg.lam) + l_pr * cfg.alpha
    return LossBreakdown(l_ctc=l_ctc, l_pr=l_pr, l_gr=l_gr, l_total=total)
