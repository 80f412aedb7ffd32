"""Margin machinery: ramp losses, the per-source disparity estimate driving
the adaptive weights, closed-form oracles on discrete testbeds, and the
diagnostic bound report.

The disparity estimate for source j is

    E_target[log(1 - p_hat)] + gamma * E_source[log p_hat]

where p_hat is the auxiliary classifier's softmax probability at the
pseudo-label assigned by the frozen main ensemble. Maximizing it over the
auxiliary measures how separable source j is from the target in feature
space; weights are a softmax of the negated absolute estimates.
"""

from dataclasses import dataclass

import numpy as np

from . import ensemble
from .nn import layers, ops


# ---------------------------------------------------------------- margins

def margin(scores, label):
    """Signed half-gap between the label score and the best competing score."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] < 2:
        raise ValueError("margin expects a 1-d score vector with >= 2 classes")
    if not 0 <= label < scores.shape[0]:
        raise ValueError(f"label {label} outside [0, {scores.shape[0]})")
    rival = np.delete(scores, label).max()
    return float((scores[label] - rival) / 2.0)


def margins(scores, labels):
    """Batch version: scores [n, C], labels [n] -> margins [n]."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = scores.shape[0]
    rows = np.arange(n)
    own = scores[rows, labels]
    masked = scores.copy()
    masked[rows, labels] = -np.inf
    return (own - masked.max(axis=1)) / 2.0


def ramp_loss(v, mu):
    """Piecewise-linear [0,1] loss: 0 above mu, 1 below 0, linear between."""
    if mu <= 0:
        raise ValueError(f"ramp margin mu must be positive, got {mu}")
    v = np.asarray(v, dtype=np.float64)
    out = np.clip(1.0 - v / mu, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def margin_loss(scores, labels, mu):
    """Mean ramp loss of margins over a batch."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] == 0:
        raise ValueError("margin_loss needs a nonempty batch")
    return float(ramp_loss(margins(scores, labels), mu).mean())


# ------------------------------------------------------- surrogate terms

def surrogate_source_term(probs, pseudo_label):
    """-log of the clamped probability at the pseudo-label (cross-entropy)."""
    return float(ops.log_prob_losses(np.asarray(probs, dtype=np.float64), pseudo_label))


def surrogate_target_term(probs, pseudo_label):
    """log of the clamped complement probability at the pseudo-label."""
    p = np.asarray(probs, dtype=np.float64)
    if not 0 <= pseudo_label < p.shape[-1]:
        raise ValueError(f"label {pseudo_label} outside [0, {p.shape[-1]})")
    return float(np.log(np.clip(1.0 - p[pseudo_label], ops.CLAMP_EPS, 1.0)))


# ------------------------------------------------- per-source estimation

@dataclass(frozen=True)
class MddEstimate:
    value: float
    iteration: int = 0


def estimate_from_features(aux, classifiers, feats_src, feats_tgt, gamma):
    """Evaluate the estimation objective on precomputed (frozen) features."""
    h_src = ensemble.pseudo_labels(ensemble.ensemble_from_features(classifiers, feats_src))
    h_tgt = ensemble.pseudo_labels(ensemble.ensemble_from_features(classifiers, feats_tgt))
    z_src, _ = layers.forward(aux, feats_src)
    z_tgt, _ = layers.forward(aux, feats_tgt)
    src_val, _ = ops.log_prob_term(z_src, h_src)
    tgt_val, _ = ops.log_one_minus_term(z_tgt, h_tgt)
    return tgt_val + gamma * src_val


def estimate_mdd(aux, generator, classifiers, source_batch, target_batch, gamma,
                 iteration=0):
    """Estimate the source-vs-target disparity seen by one auxiliary classifier.

    Pure: no parameter is touched. Pseudo-labels come from the frozen main
    ensemble; the auxiliary's outputs sit inside the softmax.
    """
    if len(source_batch.inputs) == 0 or len(target_batch.inputs) == 0:
        raise ValueError("estimate_mdd requires nonempty source and target batches")
    feats_src, _ = layers.forward(generator, source_batch.inputs)
    feats_tgt, _ = layers.forward(generator, target_batch.inputs)
    value = estimate_from_features(aux, classifiers, feats_src, feats_tgt, gamma)
    return MddEstimate(value=value, iteration=iteration)


def domain_weights(estimates):
    """Softmax of negated absolute estimates: closer sources weigh more."""
    if len(estimates) == 0:
        raise ValueError("domain_weights needs at least one estimate")
    v = np.array([abs(float(getattr(e, "value", e))) for e in estimates])
    if not np.isfinite(v).all():
        raise ValueError("domain_weights requires finite estimates")
    z = -v
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


# ------------------------------------------------------ discrete oracles

@dataclass(frozen=True)
class DiscreteDistributionPair:
    p: np.ndarray
    q: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        if self.p.shape != self.q.shape or self.p.ndim != 1:
            raise ValueError("P and Q must be 1-d vectors of equal length")
        for name, vec in (("P", self.p), ("Q", self.q)):
            if (vec < 0).any():
                raise ValueError(f"{name} has negative entries")
            if abs(vec.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} sums to {vec.sum()!r}, not 1 within 1e-12")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class OracleResult:
    value: float              # objective evaluated at the optimal discriminator
    value_closed_form: float  # independent KL-based expression
    d_star: np.ndarray


def discrete_objective(p, q, gamma, d):
    """gamma*sum(P log d) + sum(Q log(1-d)) with zero-mass points excluded."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if ((d <= 0) & (p > 0)).any() or ((d >= 1) & (q > 0)).any():
        raise ValueError("discriminator must lie in (0,1) wherever mass sits")
    mp, mq = p > 0, q > 0
    return float(gamma * np.sum(p[mp] * np.log(d[mp]))
                 + np.sum(q[mq] * np.log(1.0 - d[mq])))


def discrete_mdd_oracle(pair):
    """Optimal discriminator and optimal value on a finite support, twice.

    Route one evaluates the objective at d* = gamma*P/(gamma*P + Q); route two
    is the KL form gamma*KL(P||Z) + KL(Q||Z) + gamma*log(gamma)
    - (1+gamma)*log(1+gamma) with Z = (gamma*P + Q)/(gamma+1). The two must
    agree to 1e-9; disagreement raises.
    """
    p, q, g = pair.p, pair.q, pair.gamma
    live = (p > 0) | (q > 0)
    denom = g * p + q
    d_star = np.where(live, g * p / np.where(live, denom, 1.0), 0.0)

    value = discrete_objective(p, q, g, np.where(live, d_star, 0.5))

    z = denom[live] / (1.0 + g)
    pl, ql = p[live], q[live]
    mp, mq = pl > 0, ql > 0
    kl_p = float(np.sum(pl[mp] * np.log(pl[mp] / z[mp])))
    kl_q = float(np.sum(ql[mq] * np.log(ql[mq] / z[mq])))
    value_kl = g * kl_p + kl_q + g * np.log(g) - (1.0 + g) * np.log(1.0 + g)

    if abs(value - value_kl) > 1e-9:
        raise ArithmeticError(
            f"oracle self-check failed: {value!r} vs {value_kl!r} "
            f"(gap {abs(value - value_kl):.3e})")
    return OracleResult(value=value, value_closed_form=value_kl, d_star=d_star)


# -------------------------------------------- ramp triangle inequality

def ramp_triangle_violations(n_triples, seed=0):
    """Random (f, f', x, y, mu) battery for the ramp-loss triangle inequality.

    For scoring vectors f, f' at a labeled point: the ramp loss of f' at f's
    predicted label is at most ramp(f at y) + ramp(f' at y). Returns
    (violation_count, first_counterexample_or_None).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7121]))
    count = 0
    first = None
    remaining = n_triples
    while remaining > 0:
        block = min(remaining, 2048)
        c = int(rng.integers(2, 9))
        scale = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
        mu = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        f = rng.standard_normal((block, c)) * scale
        f2 = rng.standard_normal((block, c)) * scale
        y = rng.integers(0, c, size=block)
        h = f.argmax(axis=1)
        lhs = ramp_loss(margins(f2, h), mu)
        rhs = ramp_loss(margins(f, y), mu) + ramp_loss(margins(f2, y), mu)
        bad = lhs > rhs
        if bad.any():
            count += int(bad.sum())
            if first is None:
                i = int(np.argmax(bad))
                first = {"f": f[i].tolist(), "f_prime": f2[i].tolist(),
                         "y": int(y[i]), "mu": mu,
                         "lhs": float(lhs[i]), "rhs": float(rhs[i])}
        remaining -= block
    return count, first


# ------------------------------------------------------- bound report

@dataclass(frozen=True)
class BoundReport:
    source_margin_losses: tuple
    source_disparities: tuple
    weights: tuple
    mu: float
    weighted_sum: float
    omitted_terms: tuple = ("hypothesis-class complexity", "finite-sample deviation",
                            "ideal joint risk")

    def to_dict(self):
        return {
            "source_margin_losses": list(self.source_margin_losses),
            "source_disparities": list(self.source_disparities),
            "weights": list(self.weights),
            "mu": self.mu,
            "weighted_sum": self.weighted_sum,
            "omitted_terms": list(self.omitted_terms),
        }


def empirical_bound_report(generator, classifiers, auxiliaries, bundle, alpha, mu):
    """First-sum diagnostic: per-source ensemble margin loss plus the ramp
    disparity seen by each auxiliary (a lower bound of the true sup), combined
    with the given weights. Complexity and deviation terms are not computable
    here and are flagged as omitted.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (len(bundle.sources),):
        raise ValueError("alpha length must match the number of sources")
    feats_tgt, _ = layers.forward(generator, bundle.target.windows)
    out_tgt = ensemble.ensemble_from_features(classifiers, feats_tgt)
    h_tgt = ensemble.pseudo_labels(out_tgt)
    term1, term2 = [], []
    for j, src in enumerate(bundle.sources):
        feats_src, _ = layers.forward(generator, src.windows)
        out_src = ensemble.ensemble_from_features(classifiers, feats_src)
        ens_scores = out_src.logits.mean(axis=0)
        term1.append(margin_loss(ens_scores, src.labels, mu))
        h_src = ensemble.pseudo_labels(out_src)
        aux_src, _ = layers.forward(auxiliaries[j], feats_src)
        aux_tgt, _ = layers.forward(auxiliaries[j], feats_tgt)
        disp = margin_loss(aux_tgt, h_tgt, mu) - margin_loss(aux_src, h_src, mu)
        term2.append(disp)
    total = float(np.sum(alpha * (np.asarray(term1) + np.asarray(term2))))
    return BoundReport(source_margin_losses=tuple(term1),
                       source_disparities=tuple(term2),
                       weights=tuple(float(a) for a in alpha),
                       mu=float(mu), weighted_sum=total)
