"""K-classifier ensemble: shared-feature forward pass, mode voting, and the
classifier-discrepancy measure the adversarial stage plays over."""

import warnings
from dataclasses import dataclass

import numpy as np

from .nn import layers, ops


@dataclass
class EnsembleOutput:
    logits: np.ndarray         # [K, b, C]
    probabilities: np.ndarray  # [K, b, C]


def ensemble_from_features(classifiers, features):
    logits = np.stack([layers.forward(c, features)[0] for c in classifiers])
    return EnsembleOutput(logits=logits, probabilities=ops.softmax(logits, axis=-1))


def ensemble_forward(generator, classifiers, inputs):
    """Features computed once, fed to all K classifiers."""
    features, _ = layers.forward(generator, inputs)
    return ensemble_from_features(classifiers, features)


def pseudo_labels(output):
    """Argmax of the mean of the K softmax outputs (the canonical labeler)."""
    return output.probabilities.mean(axis=0).argmax(axis=1)


def predict_mode(output):
    """Per-sample mode of the K argmax votes; all ties break toward the
    lowest class index."""
    votes = output.probabilities.argmax(axis=2)  # [K, b]
    k, b = votes.shape
    c = output.probabilities.shape[2]
    counts = np.zeros((b, c), dtype=np.int64)
    rows = np.arange(b)
    for ki in range(k):
        counts[rows, votes[ki]] += 1
    return counts.argmax(axis=1)


def classifier_discrepancy(output):
    """Batch mean of the summed L1 deviation of the K probability tensors
    from their across-classifier mean. Zero iff all members coincide."""
    if output.probabilities.shape[0] == 1:
        warnings.warn("classifier discrepancy of a single classifier is 0 by definition")
        return 0.0
    value, _ = discrepancy_and_grad(output.probabilities)
    return value


def discrepancy_and_grad(probs):
    """Discrepancy plus its gradient w.r.t. the stacked probabilities.

    The |.| subgradient at zero is taken as zero, so identical classifiers
    yield an exactly zero gradient.
    """
    k, b, c = probs.shape
    diff = probs - probs.mean(axis=0, keepdims=True)
    value = float(np.abs(diff).sum(axis=(0, 2)).mean())
    s = np.sign(diff)
    dprobs = (s - s.mean(axis=0, keepdims=True)) / b
    return value, dprobs
