"""Dense feed-forward stages with hand-rolled reverse mode and Adam.

Only sequential chains of affine-plus-activation layers are supported; that
is all the encoder, classifier and decoder stages need. Backward passes are
exact (no autodiff framework involved), so gradient checks against central
finite differences hold to near machine precision in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "relu", "sigmoid")


class TrainingError(RuntimeError):
    """Raised when an optimization step encounters non-finite numbers."""


@dataclass
class DenseLayer:
    """Affine map plus elementwise activation: act(x @ weights.T + bias)."""

    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes {self.weights.shape} / {self.bias.shape}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("layer parameters must be finite")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_width(self) -> int:
        return self.weights.shape[1]

    @property
    def out_width(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    """Ordered dense layers; adjacent widths must chain."""

    layers: list[DenseLayer]

    def __post_init__(self):
        for first, second in zip(self.layers, self.layers[1:]):
            if first.out_width != second.in_width:
                raise ValueError(
                    f"layer widths do not chain: {first.out_width} feeds "
                    f"{second.in_width}")

    @property
    def in_width(self) -> int:
        return self.layers[0].in_width

    @property
    def out_width(self) -> int:
        return self.layers[-1].out_width


def parameter_arrays(net: Network) -> list[np.ndarray]:
    """Flat list [w0, b0, w1, b1, ...]; the live arrays, not copies."""
    out: list[np.ndarray] = []
    for layer in net.layers:
        out.append(layer.weights)
        out.append(layer.bias)
    return out


def num_parameters(net: Network) -> int:
    return sum(arr.size for arr in parameter_arrays(net))


def init_network(rng: np.random.Generator, widths, activations) -> Network:
    """Fresh network with weights uniform in +-1/sqrt(fan_in) and zero biases.

    Layer l maps widths[l] -> widths[l+1]; draws happen layer by layer in
    order so a seeded generator gives reproducible parameters.
    """
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for in_w, out_w, act in zip(widths, widths[1:], activations):
        bound = 1.0 / math.sqrt(in_w)
        weights = rng.uniform(-bound, bound, size=(out_w, in_w))
        layers.append(DenseLayer(weights, np.zeros(out_w), act))
    return Network(layers)


@dataclass
class ForwardTape:
    """Everything one backward pass needs: per-layer inputs and pre-activations."""

    inputs: list[np.ndarray]      # len L, batch input of each layer
    pre_activations: list[np.ndarray]  # len L
    batch_size: int


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    return _sigmoid(z)


def _activation_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    s = _sigmoid(z)
    return s * (1.0 - s)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow at either tail
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def net_forward(net: Network, batch: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Run the chain on a (B, in) batch; returns output and backward tape."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.in_width:
        raise ValueError(
            f"batch shape {batch.shape} does not match input width {net.in_width}")
    inputs, pre_acts = [], []
    x = batch
    for layer in net.layers:
        inputs.append(x)
        z = x @ layer.weights.T + layer.bias
        pre_acts.append(z)
        x = _activate(z, layer.activation)
    return x, ForwardTape(inputs, pre_acts, batch.shape[0])


def net_backward(net: Network, tape: ForwardTape,
                 upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact reverse mode for sum_batch <upstream, output>.

    Returns ([dw0, db0, dw1, db1, ...], input gradient). The tape must come
    from a matching forward call on the same batch.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if len(tape.inputs) != len(net.layers):
        raise ValueError("tape does not match network depth")
    if upstream.shape != (tape.batch_size, net.out_width):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match "
            f"({tape.batch_size}, {net.out_width})")
    grads: list[np.ndarray] = []
    g = upstream
    for layer, x, z in zip(reversed(net.layers), reversed(tape.inputs),
                           reversed(tape.pre_activations)):
        if x.shape[0] != tape.batch_size:
            raise ValueError("stale tape: batch shape changed")
        dz = g * _activation_grad(z, layer.activation)
        grads.append(dz.sum(axis=0))   # bias
        grads.append(dz.T @ x)         # weights
        g = dz @ layer.weights
    grads.reverse()
    return grads, g


def angle_map(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squash raw reals into circuit angles in (0, pi).

    Returns (pi * sigmoid(x), elementwise derivative) so callers can chain
    the derivative into reverse mode. Saturation at the tails is legitimate.
    Both quantities are computed from sigmoid(-|x|), the representable small
    branch, and clamped to the nearest float64 values inside the open
    interval, so the angle is strictly inside (0, pi) and the derivative
    strictly positive for every finite input.
    """
    raw = np.asarray(raw, dtype=np.float64)
    small = _sigmoid(-np.abs(raw))  # min(sigmoid(x), 1 - sigmoid(x))
    angles = np.where(raw >= 0.0, math.pi - math.pi * small, math.pi * small)
    tiny = np.nextafter(0.0, 1.0)
    angles = np.clip(angles, tiny, np.nextafter(math.pi, 0.0))
    deriv = np.maximum(math.pi * small * (1.0 - small), tiny)
    return angles, deriv


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross entropy for two-class logits.

    Computed in fused log-sum-exp form; the gradient is
    (softmax - onehot) / batch_size.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ValueError(f"expected (B, 2) logits, got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ValueError(
            f"labels shape {labels.shape} does not match batch {logits.shape[0]}")
    batch = logits.shape[0]
    rows = np.arange(batch)
    peak = logits.max(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.exp(logits - peak).sum(axis=1))
    loss = float(np.mean(lse - logits[rows, labels]))
    grad = np.exp(logits - lse[:, np.newaxis])
    grad[rows, labels] -= 1.0
    return loss, grad / batch


@dataclass
class AdamState:
    """First/second moment accumulators mirroring one parameter list."""

    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int = 0

    beta1: float = field(default=0.9, repr=False)
    beta2: float = field(default=0.999, repr=False)
    eps: float = field(default=1e-8, repr=False)


def init_adam_state(params: list[np.ndarray]) -> AdamState:
    return AdamState([np.zeros_like(p) for p in params],
                     [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ValueError("params, grads and state must have matching lengths")
    for g in grads:
        if not np.isfinite(g).all():
            raise TrainingError("non-finite gradient in optimizer step")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first, state.second):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
