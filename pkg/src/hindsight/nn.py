"""Dense numerical kernel: small MLPs with hand-written backprop, Adam, and
Polyak-averaged target copies.

Everything is float64 and deterministic. Parameters of a network live in one
flat vector; the per-layer weight matrices and bias vectors are views into it,
so optimizer updates on the flat vector are immediately visible to the layers.

Canonical parameter order (used by gradients and checkpoints): layer-major,
weights before biases, each weight matrix stored row-major with shape
(fan_out, fan_in).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

CHECKPOINT_MAGIC = b"MLP64CKP"
CHECKPOINT_VERSION = 1


@dataclass
class Mlp:
    """Fully connected network: ReLU on hidden layers, identity on the output.

    layer_sizes[0] is the input width (state dim + goal dim for the learners
    in this package) and layer_sizes[-1] is one output per discrete action.
    """

    layer_sizes: tuple[int, ...]
    params: np.ndarray
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ConfigError(f"bad layer sizes {sizes}")
        self.layer_sizes = sizes
        if self.params.shape != (param_count(sizes),):
            raise ConfigError(
                f"parameter vector has length {self.params.shape}, "
                f"expected ({param_count(sizes)},) for sizes {sizes}"
            )
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        self.weights, self.biases = [], []
        off = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(self.params[off : off + fan_out * fan_in].reshape(fan_out, fan_in))
            off += fan_out * fan_in
            self.biases.append(self.params[off : off + fan_out])
            off += fan_out

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.params.copy())


def param_count(layer_sizes) -> int:
    return sum((i + 1) * o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


def init_mlp(layer_sizes, rng: np.random.Generator) -> Mlp:
    """Seeded init: every layer uniform in +-1/sqrt(fan_in), weights and biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    flat = np.empty(param_count(sizes), dtype=np.float64)
    off = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        n = fan_out * fan_in + fan_out
        flat[off : off + n] = rng.uniform(-bound, bound, size=n)
        off += n
    return Mlp(sizes, flat)


def forward_many(net: Mlp, inputs: np.ndarray) -> np.ndarray:
    """Batched forward pass: (B, in) -> (B, out) pre-activation outputs."""
    h = _check_inputs(net, inputs)
    last = net.n_layers - 1
    for k in range(net.n_layers):
        z = h @ net.weights[k].T + net.biases[k]
        h = z if k == last else np.maximum(z, 0.0)
    return h


def forward_many_cached(net: Mlp, inputs: np.ndarray):
    """Like :func:`forward_many` but also returns the cache for backprop."""
    h = _check_inputs(net, inputs)
    pre, post = [], [h]
    last = net.n_layers - 1
    for k in range(net.n_layers):
        z = h @ net.weights[k].T + net.biases[k]
        h = z if k == last else np.maximum(z, 0.0)
        pre.append(z)
        post.append(h)
    return h, (pre, post)


def backward_many(net: Mlp, cache, output_grads: np.ndarray) -> np.ndarray:
    """Gradient of sum_b <output_b, output_grads_b> w.r.t. the flat parameters.

    `cache` must come from :func:`forward_many_cached` on the same inputs.
    """
    pre, post = cache
    if output_grads.shape != pre[-1].shape:
        raise ConfigError(
            f"output grad shape {output_grads.shape} != output shape {pre[-1].shape}"
        )
    grad = np.zeros_like(net.params)
    # Rebuild the slice views so the flat gradient shares the canonical layout.
    off = 0
    slots = []
    for w, b in zip(net.weights, net.biases):
        gw = grad[off : off + w.size].reshape(w.shape)
        off += w.size
        gb = grad[off : off + b.size]
        off += b.size
        slots.append((gw, gb))
    delta = output_grads
    for k in range(net.n_layers - 1, -1, -1):
        gw, gb = slots[k]
        np.matmul(delta.T, post[k], out=gw)
        np.sum(delta, axis=0, out=gb)
        if k > 0:
            delta = (delta @ net.weights[k]) * (pre[k - 1] > 0.0)
    return grad


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Single-input forward pass; returns the length-|A| output vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigError(f"expected a vector, got shape {x.shape}")
    return forward_many(net, x[None, :])[0]


def mlp_backward(net: Mlp, x: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    """Gradient of <forward(x), output_grad> w.r.t. parameters, flattened."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != (net.layer_sizes[-1],):
        raise ConfigError(f"output grad shape {g.shape} != ({net.layer_sizes[-1]},)")
    _, cache = forward_many_cached(net, x[None, :])
    return backward_many(net, cache, g[None, :])


def _check_inputs(net: Mlp, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.layer_sizes[0]:
        raise ConfigError(
            f"input shape {inputs.shape} incompatible with input width {net.layer_sizes[0]}"
        )
    return inputs


@dataclass
class AdamState:
    """Adam moments plus hyper-parameters for one flat parameter vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr: float = 5e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update. Mutates `params` and `state` in place."""
    if grad.shape != params.shape or state.first_moment.shape != params.shape:
        raise ConfigError("parameter/gradient/moment lengths disagree")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericalError(f"non-finite gradient (first bad index {bad})")
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * grad
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * np.square(grad)
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


@dataclass
class TargetCopy:
    """Slow-moving shadow of an online network.

    polyak_update keeps shadow <- tau * shadow + (1 - tau) * online; the
    training loop applies it every `interval` optimization steps.
    """

    net: Mlp
    tau: float = 0.995
    interval: int = 10

    @classmethod
    def of(cls, online: Mlp, tau: float = 0.995, interval: int = 10) -> "TargetCopy":
        return cls(online.copy(), tau, interval)


def polyak_update(target: TargetCopy, online_params: np.ndarray) -> None:
    if online_params.shape != target.net.params.shape:
        raise ConfigError("online/target parameter counts differ")
    p = target.net.params
    p *= target.tau
    p += (1.0 - target.tau) * online_params


def logsumexp(values: np.ndarray, axis=None) -> np.ndarray | float:
    """Max-shifted log(sum(exp(values))); overflow-safe for any finite input."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("logsumexp of empty input")
    m = np.max(values, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(values - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def save_checkpoint(path, net: Mlp) -> None:
    """Binary checkpoint: magic, version, layer sizes, then params as LE float64."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(net.layer_sizes)))
        f.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
        f.write(net.params.astype("<f8").tobytes())


def load_checkpoint(path) -> Mlp:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        version, n_sizes = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        sizes = struct.unpack(f"<{n_sizes}I", f.read(4 * n_sizes))
        flat = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    return Mlp(sizes, flat)
