"""The five-step alternating training loop.

Each iteration draws one batch per source plus one target batch, then:

  1. one ascent step per auxiliary classifier on its disparity estimate
     (generator and main classifiers frozen);
  2. source weights from the fresh estimates (uniform under the No-W ablation);
  3. one descent step on the weighted source cross-entropy plus disparity,
     updating generator and classifiers (auxiliaries frozen; classifiers feel
     only the cross-entropy, the disparity reaches the generator through the
     frozen auxiliaries);
  4. one classifier-only descent step on weighted source cross-entropy minus
     eta times the target classifier discrepancy (skipped under No-A);
  5. one generator-only descent step on the target discrepancy (skipped
     under No-A).

A parameter-hash ledger asserts after every step that only the intended
group changed. Everything is deterministic under the config seed.
"""

import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import ensemble, mdd
from .data import datasets
from .data.manifest import load_manifest
from .data.synth import synth_generate
from .nn import adam, layers, ops


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2 in the CLI."""


@dataclass(frozen=True)
class TrainConfig:
    n_iter: int = 400
    batch_size: int = 256
    learning_rate: float = 2e-4
    ensemble_size: int = 5
    eta: float = 5.0
    gamma: float = 0.1
    mu: float = 1.0
    seed: int = 0
    use_weights: bool = True
    use_adversary: bool = True
    manifest: str | None = None
    synth_preset: str | None = None
    synth_n_per_domain: int | None = None
    train_ratio: float = 0.7
    eval_every: int = 10
    conv_channels: tuple = (16, 32, 32)
    kernel_width: int = 5
    hidden_dims: tuple = (64, 64)

    def validate(self):
        positive = ["n_iter", "batch_size", "learning_rate", "ensemble_size",
                    "gamma", "mu", "kernel_width", "eval_every"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)}")
        if self.eta < 0:
            raise ConfigError(f"eta: must be >= 0, got {self.eta}")
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError(f"train_ratio: must be in (0, 1), got {self.train_ratio}")
        if (self.manifest is None) == (self.synth_preset is None):
            raise ConfigError("dataset source: set exactly one of 'manifest' and "
                              "'synth_preset'")
        if self.synth_n_per_domain is not None and self.synth_n_per_domain < 1:
            raise ConfigError("synth_n_per_domain: must be positive")
        if not self.conv_channels:
            raise ConfigError("conv_channels: need at least one conv layer")
        if any(c <= 0 for c in self.conv_channels):
            raise ConfigError(f"conv_channels: must be positive, got {self.conv_channels}")
        if any(h <= 0 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims: must be positive, got {self.hidden_dims}")
        return self


@dataclass
class ModelState:
    generator: layers.Network
    classifiers: list
    auxiliaries: list
    opt_generator: adam.AdamState
    opt_classifiers: list
    opt_auxiliaries: list
    class_count: int


@dataclass
class IterationRow:
    iteration: int
    mdd: tuple
    alpha: tuple
    loss_src: float
    loss_disp: float
    discrepancy: float
    target_acc: float | None = None


@dataclass
class TrainReport:
    n_sources: int
    rows: list = field(default_factory=list)
    final_accuracy: float | None = None
    step_counts: dict = field(default_factory=dict)
    bound_report: mdd.BoundReport | None = None
    wall_seconds: float = 0.0


@dataclass(frozen=True)
class WeightsResult:
    alpha: np.ndarray
    estimates: tuple


# ------------------------------------------------------------ model build

def generator_specs(channels, conv_channels, kernel_width):
    specs = []
    prev = channels
    for ch in conv_channels:
        specs += [layers.conv1d(prev, ch, kernel_width), layers.relu()]
        prev = ch
    specs.append(layers.gap())
    return specs


def classifier_specs(feature_dim, hidden_dims, class_count):
    specs = []
    prev = feature_dim
    for h in hidden_dims:
        specs += [layers.dense(prev, h), layers.relu()]
        prev = h
    specs.append(layers.dense(prev, class_count))
    return specs


def build_model(config, channels, width, class_count, n_sources):
    gen_specs = generator_specs(channels, config.conv_channels, config.kernel_width)
    feature_dim = layers.output_shape(gen_specs, (channels, width))[0]
    cls_specs = classifier_specs(feature_dim, config.hidden_dims, class_count)
    root = np.random.SeedSequence([config.seed, 0xC0DE])
    seeds = root.spawn(2 + config.ensemble_size)
    generator = layers.init_network(gen_specs, seeds[0])
    classifiers = [layers.init_network(cls_specs, seeds[1 + k])
                   for k in range(config.ensemble_size)]
    # All auxiliaries share one seeded draw: each per-source estimate then
    # starts from the same random scorer, so differences between estimates
    # reflect domain structure rather than head-initialization luck.
    aux_seed = seeds[1 + config.ensemble_size]
    auxiliaries = [layers.init_network(cls_specs, aux_seed)
                   for _ in range(n_sources)]
    lr = config.learning_rate
    return ModelState(
        generator=generator,
        classifiers=classifiers,
        auxiliaries=auxiliaries,
        opt_generator=adam.adam_init(generator, lr=lr),
        opt_classifiers=[adam.adam_init(c, lr=lr) for c in classifiers],
        opt_auxiliaries=[adam.adam_init(a, lr=lr) for a in auxiliaries],
        class_count=class_count,
    )


# ------------------------------------------------------------ step 1: aux

def _aux_objective_grads(aux, feats_src, feats_tgt, h_src, h_tgt, gamma):
    """Value of the disparity estimate and its gradients at the aux logits,
    plus the tapes needed to push them anywhere."""
    z_src, tape_src = layers.forward(aux, feats_src)
    z_tgt, tape_tgt = layers.forward(aux, feats_tgt)
    src_val, dz_src = ops.log_prob_term(z_src, h_src)
    tgt_val, dz_tgt = ops.log_one_minus_term(z_tgt, h_tgt)
    value = tgt_val + gamma * src_val
    return value, dz_src, dz_tgt, tape_src, tape_tgt


def _step_aux_cached(state, j, feats_src, feats_tgt, h_src, h_tgt, gamma):
    aux = state.auxiliaries[j]
    value, dz_src, dz_tgt, tape_src, tape_tgt = _aux_objective_grads(
        aux, feats_src, feats_tgt, h_src, h_tgt, gamma)
    # ascend the estimate: Adam minimizes, so feed the negated gradient
    g_src, _ = layers.backward(aux, tape_src, -gamma * dz_src)
    g_tgt, _ = layers.backward(aux, tape_tgt, -dz_tgt)
    layers.add_grads(g_tgt, g_src)
    adam.adam_step(aux, g_tgt, state.opt_auxiliaries[j])
    return value


def step_aux(state, j, source_batch, target_batch, gamma):
    """One ascent step on auxiliary j's disparity estimate; everything else
    frozen. Returns the pre-step objective value."""
    feats_src, _ = layers.forward(state.generator, source_batch.inputs)
    feats_tgt, _ = layers.forward(state.generator, target_batch.inputs)
    h_src = ensemble.pseudo_labels(
        ensemble.ensemble_from_features(state.classifiers, feats_src))
    h_tgt = ensemble.pseudo_labels(
        ensemble.ensemble_from_features(state.classifiers, feats_tgt))
    return _step_aux_cached(state, j, feats_src, feats_tgt, h_src, h_tgt, gamma)


# -------------------------------------------------------- step 2: weights

def _weights_from_estimates(estimates, use_weights):
    if use_weights:
        alpha = mdd.domain_weights(estimates)
    else:
        alpha = np.full(len(estimates), 1.0 / len(estimates))
    return WeightsResult(alpha=alpha, estimates=tuple(estimates))


def compute_weights(state, source_batches, target_batch, gamma, use_weights=True,
                    iteration=0):
    """Fresh estimates through the current auxiliaries; softmax weights, or
    the uniform vector under the No-W ablation (estimates still reported)."""
    estimates = [
        mdd.estimate_mdd(state.auxiliaries[j], state.generator, state.classifiers,
                         sb, target_batch, gamma, iteration=iteration)
        for j, sb in enumerate(source_batches)
    ]
    return _weights_from_estimates(estimates, use_weights)


# ----------------------------------------------------------- step 3: main

def _feature_cache(state, source_batches, target_batch):
    """Features, generator tapes, and ensemble pseudo-labels for one round of
    batches; valid while generator and classifiers stay frozen."""
    feats_tgt, tape_tgt = layers.forward(state.generator, target_batch.inputs)
    h_tgt = ensemble.pseudo_labels(
        ensemble.ensemble_from_features(state.classifiers, feats_tgt))
    feats_src, tapes_src, h_src = [], [], []
    for sb in source_batches:
        fs, tape = layers.forward(state.generator, sb.inputs)
        feats_src.append(fs)
        tapes_src.append(tape)
        h_src.append(ensemble.pseudo_labels(
            ensemble.ensemble_from_features(state.classifiers, fs)))
    return feats_src, tapes_src, h_src, feats_tgt, tape_tgt, h_tgt


def step_main(state, alpha, source_batches, target_batch, gamma, _cache=None):
    """One descent step on the weighted source-fit + disparity objective.

    Updates generator and classifiers only. The classifiers' gradient comes
    from the cross-entropy term alone; the disparity term reaches the
    generator through the frozen auxiliaries. Sources with exactly zero
    weight are skipped, so their batch content cannot influence the step.
    Returns (weighted source loss, weighted disparity loss).
    """
    gen, classifiers = state.generator, state.classifiers
    k = len(classifiers)
    alpha = np.asarray(alpha, dtype=np.float64)
    if _cache is None:
        _cache = _feature_cache(state, source_batches, target_batch)
    all_feats_src, tapes_src, all_h_src, feats_tgt, tape_tgt, h_tgt = _cache

    gen_grads = layers.zero_grads_like(gen)
    cls_grads = [layers.zero_grads_like(c) for c in classifiers]
    dfeats_tgt = np.zeros_like(feats_tgt)
    loss_src = 0.0
    loss_disp = 0.0

    for j, sb in enumerate(source_batches):
        a = float(alpha[j])
        if a == 0.0:
            continue
        feats_src, tape_src, h_src = all_feats_src[j], tapes_src[j], all_h_src[j]
        dfeats_src = np.zeros_like(feats_src)

        ce_j = 0.0
        for ki, cls in enumerate(classifiers):
            zk, tape_k = layers.forward(cls, feats_src)
            ce, dz = ops.cross_entropy(zk, sb.labels)
            ce_j += ce / k
            gk, dfk = layers.backward(cls, tape_k, (a / k) * dz)
            layers.add_grads(cls_grads[ki], gk)
            dfeats_src += dfk

        aux = state.auxiliaries[j]
        disp_j, dz_src, dz_tgt, tape_as, tape_at = _aux_objective_grads(
            aux, feats_src, feats_tgt, h_src, h_tgt, gamma)
        _, dfs = layers.backward(aux, tape_as, (a * gamma) * dz_src)
        _, dft = layers.backward(aux, tape_at, a * dz_tgt)
        dfeats_src += dfs
        dfeats_tgt += dft

        g_src, _ = layers.backward(gen, tape_src, dfeats_src)
        layers.add_grads(gen_grads, g_src)
        loss_src += a * ce_j
        loss_disp += a * disp_j

    g_tgt, _ = layers.backward(gen, tape_tgt, dfeats_tgt)
    layers.add_grads(gen_grads, g_tgt)

    adam.adam_step(gen, gen_grads, state.opt_generator)
    for ki, cls in enumerate(classifiers):
        adam.adam_step(cls, cls_grads[ki], state.opt_classifiers[ki])
    return loss_src, loss_disp


# ------------------------------------------------------ step 4: maxdisc

def step_maxdisc(state, source_batches, target_batch, alpha, eta, _cache=None):
    """Classifier-only descent on weighted source fit minus eta times the
    target discrepancy (classifiers sharpen their disagreement on the
    target). Returns the pre-step discrepancy value."""
    gen, classifiers = state.generator, state.classifiers
    k = len(classifiers)
    alpha = np.asarray(alpha, dtype=np.float64)
    cls_grads = [layers.zero_grads_like(c) for c in classifiers]
    if _cache is None:
        all_feats_src = [layers.forward(gen, sb.inputs)[0] for sb in source_batches]
        feats_tgt, _ = layers.forward(gen, target_batch.inputs)
    else:
        all_feats_src, feats_tgt = _cache

    for j, sb in enumerate(source_batches):
        a = float(alpha[j])
        if a == 0.0:
            continue
        for ki, cls in enumerate(classifiers):
            zk, tape_k = layers.forward(cls, all_feats_src[j])
            _, dz = ops.cross_entropy(zk, sb.labels)
            gk, _ = layers.backward(cls, tape_k, (a / k) * dz)
            layers.add_grads(cls_grads[ki], gk)

    logits, tapes = [], []
    for cls in classifiers:
        zk, tape_k = layers.forward(cls, feats_tgt)
        logits.append(zk)
        tapes.append(tape_k)
    probs = ops.softmax(np.stack(logits), axis=-1)
    disc, dprobs = ensemble.discrepancy_and_grad(probs)
    if eta != 0.0:
        dlogits = ops.probs_to_logit_grad(probs, dprobs)
        for ki, cls in enumerate(classifiers):
            gk, _ = layers.backward(cls, tapes[ki], -eta * dlogits[ki])
            layers.add_grads(cls_grads[ki], gk)

    for ki, cls in enumerate(classifiers):
        adam.adam_step(cls, cls_grads[ki], state.opt_classifiers[ki])
    return disc


# ------------------------------------------------------ step 5: mindisc

def step_mindisc(state, target_batch, _cache=None):
    """Generator-only descent on the target discrepancy (features move where
    the classifiers agree). Returns the pre-step discrepancy value."""
    gen, classifiers = state.generator, state.classifiers
    if _cache is None:
        feats_tgt, tape_gen = layers.forward(gen, target_batch.inputs)
    else:
        feats_tgt, tape_gen = _cache
    logits, tapes = [], []
    for cls in classifiers:
        zk, tape_k = layers.forward(cls, feats_tgt)
        logits.append(zk)
        tapes.append(tape_k)
    probs = ops.softmax(np.stack(logits), axis=-1)
    disc, dprobs = ensemble.discrepancy_and_grad(probs)
    dlogits = ops.probs_to_logit_grad(probs, dprobs)
    dfeats = np.zeros_like(feats_tgt)
    for ki, cls in enumerate(classifiers):
        _, dfk = layers.backward(cls, tapes[ki], dlogits[ki])
        dfeats += dfk
    g_gen, _ = layers.backward(gen, tape_gen, dfeats)
    adam.adam_step(gen, g_gen, state.opt_generator)
    return disc


# ------------------------------------------------------------- evaluation

def evaluate(generator, classifiers, windows, labels, batch_size=512):
    """Mode-vote accuracy on labeled windows."""
    if labels is None:
        raise ValueError("evaluate requires labels")
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    hits = 0
    for start in range(0, len(windows), batch_size):
        out = ensemble.ensemble_forward(generator, classifiers,
                                        windows[start:start + batch_size])
        pred = ensemble.predict_mode(out)
        hits += int((pred == labels[start:start + batch_size]).sum())
    return hits / len(windows)


# ---------------------------------------------------------- ledger checks

def _group_hashes(state):
    hashes = {"generator": layers.fingerprint(state.generator)}
    for ki, c in enumerate(state.classifiers):
        hashes[f"classifier_{ki}"] = layers.fingerprint(c)
    for j, a in enumerate(state.auxiliaries):
        hashes[f"auxiliary_{j}"] = layers.fingerprint(a)
    return hashes


def _assert_only_changed(before, after, allowed, step_name, iteration):
    for name, h in after.items():
        changed = h != before[name]
        if changed and name not in allowed:
            raise RuntimeError(f"iteration {iteration}, {step_name}: parameter group "
                               f"{name} changed but is frozen in this step")


# ------------------------------------------------------------- data plumbing

def load_bundle(config):
    if config.manifest is not None:
        return load_manifest(config.manifest)
    return synth_generate(config.synth_preset,
                          n_per_domain=config.synth_n_per_domain,
                          seed=config.seed)


def _prepare_data(config, bundle):
    """70/30-style split of every domain; target eval slice kept aside."""
    src_train = []
    for j, src in enumerate(bundle.sources):
        tr, _ = datasets.split(src, config.train_ratio, seed=[config.seed, 0x5EED, j])
        src_train.append(tr)
    idx_tr, idx_te = datasets.split_indices(len(bundle.target), config.train_ratio,
                                            seed=[config.seed, 0x5EED, len(bundle.sources)])
    tgt_train = datasets.DomainDataset(bundle.target.domain_id,
                                       bundle.target.windows[idx_tr], None, "target")
    eval_windows = bundle.target.windows[idx_te]
    eval_labels = None if bundle.eval_labels is None else bundle.eval_labels[idx_te]
    return src_train, tgt_train, eval_windows, eval_labels


# ------------------------------------------------------------------ train

def train(config, bundle=None):
    """Run the full loop; returns (ModelState, TrainReport).

    The dataset may be passed in directly (it must then match the config's
    declared source); otherwise it is loaded/generated from the config.
    """
    config.validate()
    t0 = time.perf_counter()
    if bundle is None:
        bundle = load_bundle(config)
    n_sources = len(bundle.sources)
    src_train, tgt_train, eval_windows, eval_labels = _prepare_data(config, bundle)
    state = build_model(config, bundle.channels, bundle.width, bundle.class_count,
                        n_sources)
    src_streams = [datasets.batch_stream(d, config.batch_size,
                                         seed=[config.seed, 0xBA7C, j])
                   for j, d in enumerate(src_train)]
    tgt_stream = datasets.batch_stream(tgt_train, config.batch_size,
                                       seed=[config.seed, 0xBA7C, n_sources])

    report = TrainReport(n_sources=n_sources)
    counts = {"aux": 0, "main": 0, "maxdisc": 0, "mindisc": 0}

    for it in range(1, config.n_iter + 1):
        tgt_batch = next(tgt_stream)
        src_batches = [next(s) for s in src_streams]

        # features shared by steps 1-3 (generator and classifiers are frozen
        # until step 3 applies its update at the very end)
        cache = _feature_cache(state, src_batches, tgt_batch)
        feats_src, tapes_src, h_src, feats_tgt, tape_tgt, h_tgt = cache

        ledger = _group_hashes(state)
        for j in range(n_sources):
            _step_aux_cached(state, j, feats_src[j], feats_tgt, h_src[j], h_tgt,
                             config.gamma)
            counts["aux"] += 1
        after = _group_hashes(state)
        _assert_only_changed(ledger, after,
                             {f"auxiliary_{j}" for j in range(n_sources)},
                             "step_aux", it)
        ledger = after

        estimates = [
            mdd.MddEstimate(
                value=mdd.estimate_from_features(state.auxiliaries[j],
                                                 state.classifiers, feats_src[j],
                                                 feats_tgt, config.gamma),
                iteration=it)
            for j in range(n_sources)
        ]
        weights = _weights_from_estimates(estimates, config.use_weights)

        loss_src, loss_disp = step_main(state, weights.alpha, src_batches, tgt_batch,
                                        config.gamma, _cache=cache)
        counts["main"] += 1
        after = _group_hashes(state)
        _assert_only_changed(ledger, after,
                             {"generator", *{f"classifier_{k}" for k in
                                             range(config.ensemble_size)}},
                             "step_main", it)
        ledger = after

        if config.use_adversary:
            # generator moved in step 3: recompute features once, then share
            # them between steps 4 and 5 (step 4 never touches the generator)
            feats4_src = [layers.forward(state.generator, sb.inputs)[0]
                          for sb in src_batches]
            feats4_tgt, tape4_tgt = layers.forward(state.generator,
                                                   tgt_batch.inputs)

            step_maxdisc(state, src_batches, tgt_batch, weights.alpha, config.eta,
                         _cache=(feats4_src, feats4_tgt))
            counts["maxdisc"] += 1
            after = _group_hashes(state)
            _assert_only_changed(ledger, after,
                                 {f"classifier_{k}" for k in
                                  range(config.ensemble_size)},
                                 "step_maxdisc", it)
            ledger = after

            step_mindisc(state, tgt_batch, _cache=(feats4_tgt, tape4_tgt))
            counts["mindisc"] += 1
            after = _group_hashes(state)
            _assert_only_changed(ledger, after, {"generator"}, "step_mindisc", it)

        # end-of-iteration diagnostics on this iteration's target batch
        out_tgt = ensemble.ensemble_forward(state.generator, state.classifiers,
                                            tgt_batch.inputs)
        if config.ensemble_size > 1:
            disc_value, _ = ensemble.discrepancy_and_grad(out_tgt.probabilities)
        else:
            disc_value = 0.0

        acc = None
        if eval_labels is not None and (it % config.eval_every == 0
                                        or it == config.n_iter):
            acc = evaluate(state.generator, state.classifiers, eval_windows,
                           eval_labels)

        report.rows.append(IterationRow(
            iteration=it,
            mdd=tuple(e.value for e in estimates),
            alpha=tuple(float(a) for a in weights.alpha),
            loss_src=loss_src,
            loss_disp=loss_disp,
            discrepancy=disc_value,
            target_acc=acc,
        ))

    report.final_accuracy = report.rows[-1].target_acc if report.rows else None
    report.step_counts = counts
    final_alpha = report.rows[-1].alpha if report.rows else ()
    report.bound_report = mdd.empirical_bound_report(
        state.generator, state.classifiers, state.auxiliaries,
        _train_view(bundle, src_train, tgt_train, eval_labels),
        np.asarray(final_alpha), config.mu)
    report.wall_seconds = time.perf_counter() - t0
    return state, report


def _train_view(bundle, src_train, tgt_train, eval_labels):
    """Bundle over the training splits only, for the diagnostic report."""
    return datasets.DatasetBundle(sources=src_train, target=tgt_train,
                                  class_count=bundle.class_count,
                                  eval_labels=None, meta=bundle.meta)
