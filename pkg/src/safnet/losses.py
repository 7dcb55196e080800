"""Softmax-log loss for plain CNNs and the hybrid loss for robust CNNs.

The hybrid loss combines the negative log of the label score normalized by
the score total with p-order error terms pulling the label score toward 1
and the other scores toward 0:

    L = -a1*ln(y_l / sum_i y_i) + a2*(1 - y_l)^p + a3*sum_{i != l} y_i^p

Samples labeled ``NONSENSE`` have no meaningful category; for them the
hybrid loss degenerates to the zero-target form a2*sum_i y_i^p (drive every
score low) and the softmax loss to cross-entropy against the uniform
distribution.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LossDomainError

# decision/label value for "no meaningful category"
NONSENSE = -1


@dataclass(frozen=True)
class HybridLossParams:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 0.0
    p: float = 2.0
    floor: float = 1e-12
    strict: bool = False

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError(f"hybrid loss order p must be > 1, got {self.p}")
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError("hybrid loss weights must be non-negative")
        if self.alpha1 == self.alpha2 == self.alpha3 == 0:
            raise ValueError("at least one hybrid loss weight must be positive")


def _clamped(scores, label, params):
    total = float(np.sum(scores))
    y_l = float(scores[label])
    if params.strict and (total <= params.floor or y_l <= 0.0):
        raise LossDomainError(f"hybrid loss undefined: y_label={y_l}, total={total}")
    return max(y_l, params.floor), max(total, params.floor)


def hybrid_loss(scores, label, params):
    """Hybrid loss of one score vector against an integer label (or NONSENSE)."""
    scores = np.asarray(scores, dtype=np.float64)
    p = params.p
    if label == NONSENSE:
        return float(params.alpha2 * np.sum(scores**p))
    y_l, total = _clamped(scores, label, params)
    rest = np.delete(scores, label)
    return float(
        -params.alpha1 * np.log(y_l / total)
        + params.alpha2 * (1.0 - scores[label]) ** p
        + params.alpha3 * np.sum(rest**p)
    )


def hybrid_loss_grad(scores, label, params):
    """Elementwise dL/dy_i of the hybrid loss."""
    scores = np.asarray(scores, dtype=np.float64)
    p = params.p
    if label == NONSENSE:
        return params.alpha2 * p * scores ** (p - 1.0)
    y_l, total = _clamped(scores, label, params)
    grad = params.alpha1 / total + params.alpha3 * p * scores ** (p - 1.0)
    grad[label] = -params.alpha1 * (1.0 / y_l - 1.0 / total) - params.alpha2 * p * (1.0 - y_l) ** (p - 1.0)
    return grad


def hybrid_loss_batch(scores, labels, params):
    """Mean hybrid loss over a batch plus the score gradient of that mean.

    Vectorized for the shipped p = 2 path; reduction is mean over samples so
    learning rates stay batch-size independent.
    """
    scores = np.asarray(scores)
    n, _ = scores.shape
    labels = np.asarray(labels)
    p = params.p
    f = scores.astype(np.float64)
    meaningful = labels != NONSENSE
    idx = np.arange(n)
    safe_labels = np.where(meaningful, labels, 0)
    y_l = f[idx, safe_labels]
    total = f.sum(axis=1)
    y_l_c = np.maximum(y_l, params.floor)
    total_c = np.maximum(total, params.floor)

    # meaningful-label terms
    powsum = np.sum(f**p, axis=1)
    rest_pow = powsum - y_l**p
    per_m = (-params.alpha1 * np.log(y_l_c / total_c)
             + params.alpha2 * (1.0 - y_l) ** p
             + params.alpha3 * rest_pow)
    grad_m = params.alpha1 / total_c[:, None] + params.alpha3 * p * f ** (p - 1.0)
    label_grad = (-params.alpha1 * (1.0 / y_l_c - 1.0 / total_c)
                  - params.alpha2 * p * (1.0 - y_l) ** (p - 1.0))
    # nonsense-target terms: drive every score to zero
    per_ns = params.alpha2 * powsum
    grad_ns = params.alpha2 * p * f ** (p - 1.0)

    per = np.where(meaningful, per_m, per_ns)
    grad = np.where(meaningful[:, None], grad_m, grad_ns)
    grad[idx[meaningful], safe_labels[meaningful]] = label_grad[meaningful]

    loss = float(per.mean())
    dscores = (grad / n).astype(scores.dtype)
    return loss, dscores


def softmax(scores):
    """Row-wise softmax, stabilized by max subtraction."""
    scores = np.asarray(scores)
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_log_loss(scores, label):
    """Cross-entropy of softmax(scores) against a label; returns (loss, grad)."""
    scores = np.asarray(scores, dtype=np.float64)
    probs = softmax(scores)
    if label == NONSENSE:
        # uniform target: no meaningful category is preferred
        loss = -float(np.mean(np.log(probs)))
        grad = probs - 1.0 / scores.shape[-1]
    else:
        loss = -float(np.log(probs[label]))
        grad = probs.copy()
        grad[label] -= 1.0
    return loss, grad


def softmax_log_loss_batch(scores, labels):
    """Mean softmax-log loss over a batch plus the score gradient of that mean."""
    scores = np.asarray(scores)
    n, L = scores.shape
    labels = np.asarray(labels)
    probs = softmax(scores.astype(np.float64))
    logp = np.log(np.maximum(probs, 1e-300))
    meaningful = labels != NONSENSE
    idx = np.arange(n)
    safe_labels = np.where(meaningful, labels, 0)
    per = np.where(meaningful, -logp[idx, safe_labels], -logp.mean(axis=1))
    grad = probs.copy()
    grad[idx[meaningful], safe_labels[meaningful]] -= 1.0
    grad[~meaningful] -= 1.0 / L
    loss = float(per.mean())
    return loss, (grad / n).astype(scores.dtype)
