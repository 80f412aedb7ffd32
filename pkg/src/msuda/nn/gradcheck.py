"""Finite-difference gradient checker (central differences).

The scalar under test is a fixed random projection of the network output,
sum(r * forward(x)), which exercises every output coordinate. The reported
figure is max over checked parameter coordinates of
|analytic - numeric| / max(1e-12, |analytic| + |numeric|).
"""

import numpy as np

from . import layers

FD_STEP = 1e-5


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))


def fd_partial(net, x, r, layer_idx, name, coord, h=FD_STEP):
    """Central-difference partial of sum(r * forward(x)) w.r.t. one coordinate."""
    flat = net.params[layer_idx][name].reshape(-1)
    orig = flat[coord]
    flat[coord] = orig + h
    yp, _ = layers.forward(net, x)
    flat[coord] = orig - h
    ym, _ = layers.forward(net, x)
    flat[coord] = orig
    return float(((yp - ym) * r).sum() / (2.0 * h))


def grad_check(net, x, h=FD_STEP, samples_per_param=None, seed=0):
    """Max relative error between analytic and numeric partials.

    samples_per_param=None checks every coordinate; an integer checks that
    many seeded-random coordinates per parameter tensor (needed to keep large
    stacks affordable).
    """
    x = np.asarray(x, dtype=np.float64)
    y0, tape = layers.forward(net, x)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D5F]))
    r = rng.standard_normal(y0.shape)
    grads, _ = layers.backward(net, tape, r)
    worst = 0.0
    for li, p in enumerate(net.params):
        for name, a in p.items():
            n = a.size
            if samples_per_param is None or samples_per_param >= n:
                coords = range(n)
            else:
                coords = rng.choice(n, size=samples_per_param, replace=False)
            gflat = grads[li][name].reshape(-1)
            for c in coords:
                numeric = fd_partial(net, x, r, li, name, int(c), h=h)
                worst = max(worst, relative_error(float(gflat[c]), numeric))
    return worst
