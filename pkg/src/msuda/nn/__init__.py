"""Hand-rolled differentiable kernel: layers, losses, Adam, gradient checking."""

from .adam import AdamState, adam_init, adam_step
from .backend import ACTIVE_BACKEND, available_backends
from .gradcheck import grad_check
from .layers import (LayerSpec, Network, add_grads, backward, conv1d, dense,
                     fingerprint, forward, gap, init_network, output_shape,
                     relu, zero_grads_like)
from .ops import (CLAMP_EPS, cross_entropy, log_one_minus_term,
                  log_prob_losses, log_prob_term, softmax)
