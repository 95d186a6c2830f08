from __future__ import annotations

import numpy as np

from ..errors import ContractError, ShapeError
from ..tensor.core import Tensor


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """−log softmax(logits)[label] via a max-shifted log-sum-exp."""
    if logits.ndim != 1:
        raise ShapeError(f"cross_entropy expects a logit vector, got shape {list(logits.shape)}")
    n = logits.shape[0]
    if not 0 <= int(label) < n:
        raise ContractError(f"label {label} out of range for {n} classes")
    label = int(label)
    logp = log_softmax(logits.data)
    probs = np.exp(logp)

    def backward(g: np.ndarray):
        grad = probs.copy()
        grad[label] -= 1.0
        return (g * grad,)

    return Tensor.make_result(np.asarray(-logp[label]), (logits,), backward, "cross_entropy")
