"""Softmax cross-entropy, fused so the logit gradient is probs - onehot.

A 2-class softmax with log loss is exactly binary log loss, so the same op
serves both the 2-way and 3-way heads.
"""

from __future__ import annotations

import numpy as np

from ..errors import LabelOutOfRange
from .layers import softmax


def softmax_cross_entropy(logits: np.ndarray, labels):
    """Per-sample probs, losses, and logit gradients.

    logits: (N, K) or (K,); labels: int array (N,) or scalar. Returns
    (probs, loss, d_logits) with the same leading shape as the input.
    The gradient is per sample (not averaged); batch reductions are the
    caller's job.
    """
    squeeze = logits.ndim == 1
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, k = logits.shape
    if labels.shape != (n,):
        raise LabelOutOfRange(f"expected {n} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")

    probs = softmax(logits)
    rows = np.arange(n)
    with np.errstate(divide="ignore"):  # underflowed prob -> inf loss, caller's problem
        loss = -np.log(probs[rows, labels])
    d_logits = probs.copy()
    d_logits[rows, labels] -= 1.0

    if squeeze:
        return probs[0], float(loss[0]), d_logits[0]
    return probs, loss, d_logits
