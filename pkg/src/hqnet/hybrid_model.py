"""Three-stage classifier: dense encoder, quantum or classical middle, dense decoder.

The quantum middle holds no trainable parameters of its own: the encoder's
M outputs, squashed into (0, pi) by the angle map, are the circuit angles,
and the circuit's Q1 selected output probabilities feed the decoder.

The backward pass crosses the classical/quantum boundary by contraction:
the decoder's input gradient g23 (B, Q1) is folded through each sample's
exact circuit gradient matrix (Q1, M) and the angle-map derivative to give
g12 (B, M), which the encoder then consumes. Differentiating the scalar
sum(o12 * g12) through the encoder would produce the same update, since its
partial with respect to o12 is g12 by construction; the contraction simply
skips building that scalar. With a classical middle the three stages reduce
to one plain sequential network, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical_net import (
    AdamState,
    Network,
    TrainingError,
    adam_step,
    angle_map,
    cross_entropy,
    net_backward,
    net_forward,
    parameter_arrays,
)
from .quantum_model import (
    CircuitLayout,
    OutputSelection,
    forward_batch,
    gradient_exact_batch,
)


class DimensionMismatchError(ValueError):
    """A stage boundary whose widths disagree, with a diagnostic message."""

    def __init__(self, boundary: str, expected: int, got: int):
        self.boundary = boundary
        self.expected = expected
        self.got = got
        super().__init__(
            f"{boundary} boundary: expected width {expected}, got {got}")


@dataclass
class QuantumMiddle:
    """Variational-circuit middle stage; exposes zero trainable parameters."""

    layout: CircuitLayout
    selection: OutputSelection

    @property
    def in_width(self) -> int:
        return self.layout.num_params

    @property
    def out_width(self) -> int:
        return self.selection.num_outputs(self.layout.num_qubits)


@dataclass
class ClassicalMiddle:
    """Dense middle stage, making the whole model one sequential network."""

    net: Network

    @property
    def in_width(self) -> int:
        return self.net.in_width

    @property
    def out_width(self) -> int:
        return self.net.out_width


@dataclass
class MainModel:
    encoder: Network
    middle: QuantumMiddle | ClassicalMiddle
    decoder: Network

    @property
    def is_quantum(self) -> bool:
        return isinstance(self.middle, QuantumMiddle)


def model_parameters(model: MainModel) -> list[np.ndarray]:
    """All trainable arrays: encoder, then classical middle (if any), then decoder."""
    params = parameter_arrays(model.encoder)
    params += middle_parameters(model.middle)
    params += parameter_arrays(model.decoder)
    return params


def middle_parameters(middle: QuantumMiddle | ClassicalMiddle) -> list[np.ndarray]:
    if isinstance(middle, ClassicalMiddle):
        return parameter_arrays(middle.net)
    return []


def total_parameters(model: MainModel) -> int:
    return sum(arr.size for arr in model_parameters(model))


@dataclass
class HybridTape:
    """Per-batch intermediates captured by one hybrid forward pass."""

    encoder_tape: object
    o12: np.ndarray                  # (B, M) encoder outputs = middle inputs
    angles: np.ndarray | None        # (B, M), quantum middles only
    angle_grad: np.ndarray | None    # (B, M) angle-map derivative
    middle_tape: object | None       # classical middles only
    o23: np.ndarray                  # (B, Q1) middle outputs
    decoder_tape: object
    batch_size: int


def dimension_check(model: MainModel, sample: np.ndarray) -> None:
    """Fail fast on the first stage boundary whose widths disagree.

    Checks the declared widths, then runs one single-sample forward pass as
    a smoke test. Raises ``DimensionMismatchError`` naming the boundary.
    """
    sample = np.asarray(sample, dtype=np.float64).reshape(-1)
    if model.encoder.in_width != sample.size:
        raise DimensionMismatchError("input->encoder",
                                     model.encoder.in_width, sample.size)
    if model.encoder.out_width != model.middle.in_width:
        raise DimensionMismatchError("encoder->middle", model.middle.in_width,
                                     model.encoder.out_width)
    if model.middle.out_width != model.decoder.in_width:
        raise DimensionMismatchError("middle->decoder", model.decoder.in_width,
                                     model.middle.out_width)
    if model.decoder.out_width != 2:
        raise DimensionMismatchError("decoder->output", 2,
                                     model.decoder.out_width)
    hybrid_forward(model, sample[np.newaxis, :])


def hybrid_forward(model: MainModel,
                   batch: np.ndarray) -> tuple[np.ndarray, HybridTape]:
    """Forward pass over a (B, D) batch; returns (logits, tape).

    Quantum per-sample gradient matrices are not computed here; they are
    built lazily by ``hybrid_backward`` so evaluation passes stay cheap.
    """
    batch = np.asarray(batch, dtype=np.float64)
    o12, encoder_tape = net_forward(model.encoder, batch)
    if model.is_quantum:
        middle: QuantumMiddle = model.middle
        if o12.shape[1] != middle.in_width:
            raise DimensionMismatchError("encoder->middle", middle.in_width,
                                         o12.shape[1])
        angles, angle_grad = angle_map(o12)
        o23 = forward_batch(middle.layout, angles, middle.selection)
        middle_tape = None
    else:
        angles = angle_grad = None
        o23, middle_tape = net_forward(model.middle.net, o12)
    logits, decoder_tape = net_forward(model.decoder, o23)
    tape = HybridTape(encoder_tape, o12, angles, angle_grad, middle_tape,
                      o23, decoder_tape, batch.shape[0])
    return logits, tape


def hybrid_backward(model: MainModel, tape: HybridTape,
                    loss_grad: np.ndarray) -> list[np.ndarray]:
    """Gradients for every trainable array, ordered like ``model_parameters``.

    ``loss_grad`` is d loss / d logits, shape (B, 2).
    """
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.shape[0] != tape.batch_size:
        raise ValueError("stale tape: batch size does not match loss gradient")
    decoder_grads, g23 = net_backward(model.decoder, tape.decoder_tape, loss_grad)
    if model.is_quantum:
        middle: QuantumMiddle = model.middle
        grad_mats = gradient_exact_batch(middle.layout, tape.angles,
                                         middle.selection)  # (B, Q1, M)
        g12 = np.einsum("bq,bqm->bm", g23, grad_mats) * tape.angle_grad
        middle_grads: list[np.ndarray] = []
    else:
        middle_grads, g12 = net_backward(model.middle.net, tape.middle_tape, g23)
    encoder_grads, _ = net_backward(model.encoder, tape.encoder_tape, g12)
    return encoder_grads + middle_grads + decoder_grads


def train_step(model: MainModel, batch: np.ndarray, labels: np.ndarray,
               adam: AdamState, lr: float) -> tuple[float, float]:
    """One forward/backward/update step; returns (loss, batch accuracy)."""
    logits, tape = hybrid_forward(model, batch)
    loss, loss_grad = cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite training loss: {loss}")
    grads = hybrid_backward(model, tape, loss_grad)
    adam_step(model_parameters(model), grads, adam, lr)
    accuracy = float(np.mean(np.argmax(logits, axis=1) == labels))
    return loss, accuracy


def evaluate(model: MainModel, dataset, chunk: int = 512) -> float:
    """Fraction of samples whose argmax logit matches the label.

    ``dataset`` is anything with ``images`` (n, D) and ``labels`` (n,)
    attributes. Ties between the two logits resolve to class 0. Processes
    fixed-size chunks so large sets do not blow up middle-stage memory.
    """
    images, labels = dataset.images, dataset.labels
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    hits = 0
    for start in range(0, len(labels), chunk):
        logits, _ = hybrid_forward(model, images[start:start + chunk])
        hits += int(np.sum(np.argmax(logits, axis=1) == labels[start:start + chunk]))
    return hits / len(labels)
