"""Layer specs, seeded He initialization, and forward/backward with a tape.

Networks are flat lists of layers; a forward pass returns the output plus a
tape of saved inputs, and backward consumes the tape to produce parameter
gradients and the input gradient. Everything is float64 and deterministic
given the seed.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import backend

KINDS = ("dense", "conv1d", "relu", "gap")


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind plus the extents that kind needs.

    dense:  in_dim -> out_dim on [batch, in_dim] inputs
    conv1d: in_channels -> out_channels, valid padding, stride 1, on
            [batch, in_channels, length] inputs
    relu:   elementwise, no extents
    gap:    global average pool over the last axis, [b, c, l] -> [b, c]
    """

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel_width: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "dense" and (self.in_dim <= 0 or self.out_dim <= 0):
            raise ValueError(f"dense layer needs positive in_dim/out_dim, got {self}")
        if self.kind == "conv1d" and min(self.in_channels, self.out_channels, self.kernel_width) <= 0:
            raise ValueError(f"conv1d layer needs positive channels and kernel width, got {self}")

    @property
    def fan_in(self):
        if self.kind == "dense":
            return self.in_dim
        if self.kind == "conv1d":
            return self.in_channels * self.kernel_width
        return 0


def dense(in_dim, out_dim):
    return LayerSpec("dense", in_dim=in_dim, out_dim=out_dim)


def conv1d(in_channels, out_channels, kernel_width):
    return LayerSpec("conv1d", in_channels=in_channels, out_channels=out_channels,
                     kernel_width=kernel_width)


def relu():
    return LayerSpec("relu")


def gap():
    return LayerSpec("gap")


def output_shape(specs, input_shape):
    """Propagate a sample shape (no batch axis) through specs, validating.

    Dense layers see 1-d shapes (features,); conv/gap see (channels, length).
    Raises ValueError naming the offending layer index.
    """
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        if spec.kind == "dense":
            if len(shape) != 1 or shape[0] != spec.in_dim:
                raise ValueError(f"layer {i} (dense): expected ({spec.in_dim},), got {shape}")
            shape = (spec.out_dim,)
        elif spec.kind == "conv1d":
            if len(shape) != 2 or shape[0] != spec.in_channels:
                raise ValueError(
                    f"layer {i} (conv1d): expected ({spec.in_channels}, length), got {shape}")
            if shape[1] < spec.kernel_width:
                raise ValueError(
                    f"layer {i} (conv1d): kernel width {spec.kernel_width} exceeds "
                    f"input length {shape[1]}")
            shape = (spec.out_channels, shape[1] - spec.kernel_width + 1)
        elif spec.kind == "gap":
            if len(shape) != 2:
                raise ValueError(f"layer {i} (gap): expected (channels, length), got {shape}")
            shape = (shape[0],)
        # relu preserves shape
    return shape


def init_params(spec, rng):
    """He-style init: zero-mean normal with scale sqrt(2 / fan_in); zero biases."""
    if spec.kind == "dense":
        scale = np.sqrt(2.0 / spec.fan_in)
        return {"w": rng.standard_normal((spec.out_dim, spec.in_dim)) * scale,
                "b": np.zeros(spec.out_dim)}
    if spec.kind == "conv1d":
        scale = np.sqrt(2.0 / spec.fan_in)
        return {"w": rng.standard_normal((spec.out_channels, spec.in_channels,
                                          spec.kernel_width)) * scale,
                "b": np.zeros(spec.out_channels)}
    return {}


@dataclass
class Network:
    specs: tuple
    params: list  # per-layer dicts of float64 arrays, {} for parameterless kinds

    def n_params(self):
        return sum(a.size for p in self.params for a in p.values())


def init_network(specs, seed):
    """Build a Network with parameters drawn from a seeded generator.

    seed may be an int or a numpy SeedSequence; the same seed always yields
    bit-identical parameters.
    """
    if isinstance(seed, np.random.SeedSequence):
        rng = np.random.default_rng(seed)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
    return Network(specs=tuple(specs), params=[init_params(s, rng) for s in specs])


@dataclass
class Tape:
    net: Network
    param_ids: tuple
    inputs: list = field(default_factory=list)


def _param_ids(net):
    return tuple(id(a) for p in net.params for a in p.values())


def forward(net, x):
    """Run x [batch, ...] through the network; returns (output, tape)."""
    h = np.asarray(x, dtype=np.float64)
    tape = Tape(net=net, param_ids=_param_ids(net))
    for i, (spec, p) in enumerate(zip(net.specs, net.params)):
        tape.inputs.append(h)
        if spec.kind == "dense":
            if h.ndim != 2 or h.shape[1] != spec.in_dim:
                raise ValueError(f"layer {i} (dense): expected [batch, {spec.in_dim}], "
                                 f"got {h.shape}")
            h = h @ p["w"].T + p["b"]
        elif spec.kind == "conv1d":
            if h.ndim != 3 or h.shape[1] != spec.in_channels:
                raise ValueError(f"layer {i} (conv1d): expected [batch, {spec.in_channels}, "
                                 f"length], got {h.shape}")
            if h.shape[2] < spec.kernel_width:
                raise ValueError(f"layer {i} (conv1d): kernel width {spec.kernel_width} "
                                 f"exceeds input length {h.shape[2]}")
            h = backend.conv1d_forward(np.ascontiguousarray(h), p["w"], p["b"])
        elif spec.kind == "relu":
            h = np.maximum(h, 0.0)
        elif spec.kind == "gap":
            if h.ndim != 3:
                raise ValueError(f"layer {i} (gap): expected [batch, channels, length], "
                                 f"got {h.shape}")
            h = h.mean(axis=2)
    return h, tape


def backward(net, tape, dy):
    """Backpropagate dy through the taped forward pass.

    Returns (grads, dx) where grads mirrors net.params. Rejects tapes from a
    different network or from before a parameter update.
    """
    if tape.net is not net:
        raise ValueError("tape was recorded on a different network")
    if tape.param_ids != _param_ids(net):
        raise ValueError("stale tape: parameters changed since the forward pass")
    g = np.asarray(dy, dtype=np.float64)
    grads = [None] * len(net.specs)
    for i in range(len(net.specs) - 1, -1, -1):
        spec, p, x = net.specs[i], net.params[i], tape.inputs[i]
        if spec.kind == "dense":
            grads[i] = {"w": g.T @ x, "b": g.sum(axis=0)}
            g = g @ p["w"]
        elif spec.kind == "conv1d":
            dx, dw, db = backend.conv1d_backward(
                np.ascontiguousarray(x), p["w"], np.ascontiguousarray(g))
            grads[i] = {"w": dw, "b": db}
            g = dx
        elif spec.kind == "relu":
            grads[i] = {}
            g = g * (x > 0.0)
        elif spec.kind == "gap":
            grads[i] = {}
            g = np.repeat(g[:, :, None], x.shape[2], axis=2) / x.shape[2]
    return grads, g


def fingerprint(net):
    """sha256 over all parameter bytes; detects any parameter change."""
    h = hashlib.sha256()
    for p in net.params:
        for name in sorted(p):
            a = p[name]
            h.update(name.encode())
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
    return h.hexdigest()


def zero_grads_like(net):
    return [{k: np.zeros_like(v) for k, v in p.items()} for p in net.params]


def add_grads(total, grads, scale=1.0):
    """total += scale * grads, elementwise over the grad structure."""
    for tp, gp in zip(total, grads):
        for k in gp:
            tp[k] += scale * gp[k]
    return total
