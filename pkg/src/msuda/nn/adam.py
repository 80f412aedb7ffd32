"""Adam with bias correction, one state per parameter group."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)  # mirrors the network's param dicts
    v: list = field(default_factory=list)


def adam_init(net, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    m = [{k: np.zeros_like(a) for k, a in p.items()} for p in net.params]
    v = [{k: np.zeros_like(a) for k, a in p.items()} for p in net.params]
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, m=m, v=v)


def adam_step(net, grads, state):
    """One update. Moments update in place; parameter arrays are replaced with
    fresh ones so outstanding tapes are invalidated."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(net.params, grads, state.m, state.v):
        for k in p:
            gk = g[k]
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk
            m_hat = m[k] / bc1
            v_hat = v[k] / bc2
            p[k] = p[k] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
