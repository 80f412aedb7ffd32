"""Softmax and the clamped log-probability loss terms, with logit gradients.

All probabilities entering a log are clamped to [CLAMP_EPS, 1] so every loss
value stays finite. Gradients follow the unclamped composition (the clamp
acts as identity in backward, with a clamped denominator where one appears),
so saturated rows keep a learning signal instead of going silent.
"""

import numpy as np

CLAMP_EPS = 1e-7


def softmax(z, axis=-1):
    """Numerically stable softmax; rows sum to 1, invariant to constant shifts."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_prob_term(logits, labels):
    """Mean over the batch of log(clamp(softmax(logits)[label])).

    Returns (value, dvalue/dlogits). This is the negated cross-entropy; the
    gradient is the exact log-softmax derivative (onehot − p), which stays
    informative even on rows where the value clamp binds.
    """
    p = softmax(logits)
    n = logits.shape[0]
    rows = np.arange(n)
    picked = p[rows, labels]
    value = float(np.mean(np.log(np.clip(picked, CLAMP_EPS, 1.0))))
    # d log p_y / dz_c = onehot_y - p_c, averaged over the batch
    dz = -p.copy()
    dz[rows, labels] += 1.0
    dz /= n
    return value, dz


def log_one_minus_term(logits, labels):
    """Mean over the batch of log(clamp(1 - softmax(logits)[label])).

    Returns (value, dvalue/dlogits). The gradient keeps the analytic
    −p_y(onehot − p)/(1 − p_y) form with the denominator clamped, so it is
    finite everywhere and never goes silent.
    """
    p = softmax(logits)
    n = logits.shape[0]
    rows = np.arange(n)
    picked = p[rows, labels]
    rest = 1.0 - picked
    value = float(np.mean(np.log(np.clip(rest, CLAMP_EPS, 1.0))))
    # d log(1 - p_y) / dz_c = -p_y (onehot - p_c) / (1 - p_y)
    coef = picked / np.maximum(rest, CLAMP_EPS)
    dz = p * coef[:, None]
    dz[rows, labels] -= coef
    dz /= n
    return value, dz


def cross_entropy(logits, labels):
    """Mean clamped cross-entropy and its logit gradient."""
    value, dz = log_prob_term(logits, labels)
    return -value, -dz


def log_loss_value(prob):
    """-log of a clamped probability (elementwise convenience)."""
    return -np.log(np.clip(np.asarray(prob, dtype=np.float64), CLAMP_EPS, 1.0))


def log_prob_losses(probs, label):
    """-log of the clamped probability at `label`.

    probs is one distribution [C] or a batch [n, C]; label an int or [n] array.
    """
    p = np.asarray(probs, dtype=np.float64)
    lab = np.asarray(label, dtype=np.int64)
    c = p.shape[-1]
    if lab.min() < 0 or lab.max() >= c:
        raise ValueError(f"label {lab[(lab < 0) | (lab >= c)].flat[0]} outside [0, {c})")
    if p.ndim == 1:
        return float(log_loss_value(p[lab]))
    picked = p[np.arange(p.shape[0]), lab]
    return log_loss_value(picked)


def probs_to_logit_grad(p, dp):
    """Chain a gradient w.r.t. softmax outputs back to logits, rowwise.

    p and dp are [..., classes]; returns dlogits of the same shape using
    dz = p * (dp - sum(dp * p)).
    """
    inner = (dp * p).sum(axis=-1, keepdims=True)
    return p * (dp - inner)
