"""Variational circuit layouts, probability outputs, and their gradients.

A circuit layout is an ordered list of gate slots. Every slot consumes three
consecutive angles, so a layout with S slots has M = 3*S parameters, stored
slot-major: (alpha, beta, gamma) for a single-qubit slot, (theta, phi, eta)
for a pair slot. Angles live canonically in [0, pi), but every finite real
is accepted so that shifted angles like gamma + pi/2 remain expressible.

Gradients are exact and come from generator insertion: the derivative of a
slot with respect to one of its angles equals the slot with i times the
matching Pauli generator multiplied in at that angle's position. For a
single-qubit slot exp(i*a*Y) exp(i*b*Z) exp(i*g*Y) the insertion point is
after the slot for ``a``, between the g- and a-rotations for ``b``, and
before the slot for ``g``; pair-slot generators commute with their own slot
and are inserted after it. d p_k / d w_m = 2 Re[conj(a_k) * b_km] with
a_k = <k|W|0> and b_km = <k|W'_m|0>.

All heavy entry points have batched variants that evaluate one circuit per
row of a (B, M) angle array; the scalar API wraps them with B = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .statevector import (
    apply_matrix_1q,
    apply_pair_rotation,
    apply_pauli_2q,
    u1_matrix,
    _yzy_product,
    zero_state_array,
)

HALF_PI = math.pi / 2


class UnsupportedShiftError(ValueError):
    """Raised when a pi/2 angle shift is requested for a pair-slot parameter."""


@dataclass(frozen=True)
class Slot:
    kind: str  # "u1" or "u2"
    qubits: tuple[int, ...]


@dataclass(frozen=True)
class CircuitLayout:
    """Ordered gate slots of a variational circuit on ``num_qubits`` qubits."""

    num_qubits: int
    slots: tuple[Slot, ...]

    @property
    def num_params(self) -> int:
        return 3 * len(self.slots)


class OutputSelection(Enum):
    """Which measurement probabilities the circuit exposes as its output."""

    FULL = "full"  # all 2^N basis-state probabilities
    MIN = "min"    # only the probability of |0...0>

    def num_outputs(self, num_qubits: int) -> int:
        return 1 << num_qubits if self is OutputSelection.FULL else 1


def build_layout(num_qubits: int, tokens) -> CircuitLayout:
    """Expand layout tokens into a gate-slot list.

    Tokens: ``u1-all`` (single-qubit slot on every qubit, ascending),
    ``u2-even`` (pair slots on (0,1), (2,3), ...), ``u2-odd`` (pair slots on
    (1,2), (3,4), ...), ``u1@<k>``, and ``u2@<j>:<k>``. A pair token that
    expands to zero gates is an explicit error rather than a silent no-op.
    """
    if num_qubits < 1:
        raise ValueError(f"num_qubits must be at least 1, got {num_qubits}")
    slots: list[Slot] = []
    for token in tokens:
        tok = str(token).strip()
        if tok == "u1-all":
            slots.extend(Slot("u1", (q,)) for q in range(num_qubits))
        elif tok in ("u2-even", "u2-odd"):
            start = 0 if tok == "u2-even" else 1
            pairs = [(q, q + 1) for q in range(start, num_qubits - 1, 2)]
            if not pairs:
                raise ValueError(
                    f"token {tok!r} expands to an empty layer on "
                    f"{num_qubits} qubit(s)")
            slots.extend(Slot("u2", pair) for pair in pairs)
        elif tok.startswith("u1@"):
            slots.append(Slot("u1", (_parse_index(tok, tok[3:], num_qubits),)))
        elif tok.startswith("u2@"):
            parts = tok[3:].split(":")
            if len(parts) != 2:
                raise ValueError(f"malformed layout token {tok!r}")
            j = _parse_index(tok, parts[0], num_qubits)
            k = _parse_index(tok, parts[1], num_qubits)
            if j == k:
                raise ValueError(f"layout token {tok!r} repeats a qubit")
            slots.append(Slot("u2", (j, k)))
        else:
            raise ValueError(f"malformed layout token {tok!r}")
    return CircuitLayout(num_qubits, tuple(slots))


def _parse_index(token: str, text: str, num_qubits: int) -> int:
    try:
        q = int(text)
    except ValueError:
        raise ValueError(f"malformed layout token {token!r}") from None
    if not 0 <= q < num_qubits:
        raise IndexError(
            f"layout token {token!r}: qubit {q} out of range for "
            f"{num_qubits} qubit(s)")
    return q


def _check_angles(layout: CircuitLayout, angles) -> np.ndarray:
    arr = np.asarray(angles, dtype=np.float64)
    if arr.shape[-1] != layout.num_params:
        raise ValueError(
            f"angle vector has length {arr.shape[-1]}, layout needs "
            f"{layout.num_params}")
    return arr


def _apply_slot(amps: np.ndarray, slot: Slot, t0, t1, t2) -> None:
    if slot.kind == "u1":
        apply_matrix_1q(amps, slot.qubits[0], u1_matrix(t0, t1, t2))
    else:
        apply_pair_rotation(amps, slot.qubits[0], slot.qubits[1], t0, t1, t2)


def _apply_slot_dagger(amps: np.ndarray, slot: Slot, t0, t1, t2) -> None:
    if slot.kind == "u1":
        apply_matrix_1q(amps, slot.qubits[0], u1_matrix(-t2, -t1, -t0))
    else:
        apply_pair_rotation(amps, slot.qubits[0], slot.qubits[1], -t0, -t1, -t2)


def _prefix_states(layout: CircuitLayout, angles: np.ndarray) -> list[np.ndarray]:
    """States after 0, 1, ..., S slots, one (B, 2^N) array per entry."""
    batch = angles.shape[0]
    prefixes = [zero_state_array(layout.num_qubits, (batch,))]
    for s, slot in enumerate(layout.slots):
        amps = prefixes[-1].copy()
        _apply_slot(amps, slot, angles[:, 3 * s], angles[:, 3 * s + 1],
                    angles[:, 3 * s + 2])
        prefixes.append(amps)
    return prefixes


def forward_state_batch(layout: CircuitLayout, angles) -> np.ndarray:
    """Final statevectors, one per row of a (B, M) angle array."""
    angles = _check_angles(layout, np.atleast_2d(angles))
    amps = zero_state_array(layout.num_qubits, (angles.shape[0],))
    for s, slot in enumerate(layout.slots):
        _apply_slot(amps, slot, angles[:, 3 * s], angles[:, 3 * s + 1],
                    angles[:, 3 * s + 2])
    return amps


def forward_state(layout: CircuitLayout, angles) -> np.ndarray:
    """Final statevector W(angles)|0...0> as a (2^N,) complex array."""
    return forward_state_batch(layout, np.asarray(angles)[np.newaxis])[0]


def forward_batch(layout: CircuitLayout, angles, selection: OutputSelection) -> np.ndarray:
    """Selected output probabilities, shape (B, Q1)."""
    amps = forward_state_batch(layout, angles)
    probs = np.abs(amps) ** 2
    if selection is OutputSelection.MIN:
        return probs[:, :1]
    return probs


def forward(layout: CircuitLayout, angles, selection: OutputSelection) -> np.ndarray:
    """Selected output probabilities for one angle vector, shape (Q1,)."""
    return forward_batch(layout, np.asarray(angles)[np.newaxis], selection)[0]


def _mat2(m00, m01, m10, m11) -> np.ndarray:
    out = np.empty(np.shape(m00) + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = m00
    out[..., 0, 1] = m01
    out[..., 1, 0] = m10
    out[..., 1, 1] = m11
    return out


def _u1_slot_matrices(t0, t1, t2):
    """Forward matrix of a single-qubit slot plus its three derivative matrices.

    Derivatives multiply in i*Y after the slot (alpha), i*Z between the
    gamma- and alpha-rotations (beta), and i*Y before the slot (gamma).
    """
    mid00, mid11 = np.exp(1j * t1), np.exp(-1j * t1)
    fwd = _yzy_product(t0, mid00, mid11, t2)
    u00, u01 = fwd[..., 0, 0], fwd[..., 0, 1]
    u10, u11 = fwd[..., 1, 0], fwd[..., 1, 1]
    d_alpha = _mat2(u10, u11, -u00, -u01)            # iY @ U
    d_beta = _yzy_product(t0, 1j * mid00, -1j * mid11, t2)
    d_gamma = _mat2(-u01, u00, -u11, u10)            # U @ iY
    return fwd, (d_alpha, d_beta, d_gamma)


def _overlap_terms_batch(layout: CircuitLayout, angles: np.ndarray,
                         selection: OutputSelection):
    """Overlaps a_k = <k|W|0> and b_km = <k|W'_m|0> for the selected k.

    One forward sweep caches the prefix state before every slot; a backward
    sweep then drags the selected basis bras through the circuit so each
    slot's three derivative insertions cost O(1) extra gate applications.
    Returns arrays of shape (B, Q1) and (B, Q1, M).
    """
    batch = angles.shape[0]
    n = layout.num_qubits
    dim = 1 << n
    q1 = selection.num_outputs(n)
    num_slots = len(layout.slots)

    prefixes = _prefix_states(layout, angles)
    if selection is OutputSelection.FULL:
        a = prefixes[-1].copy()
        lam = np.broadcast_to(np.eye(dim, dtype=np.complex128),
                              (batch, dim, dim)).copy()
    else:
        a = prefixes[-1][:, :1].copy()
        lam = zero_state_array(n, (batch, 1))

    b = np.empty((batch, q1, layout.num_params), dtype=np.complex128)
    for s in range(num_slots - 1, -1, -1):
        slot = layout.slots[s]
        t0, t1, t2 = angles[:, 3 * s], angles[:, 3 * s + 1], angles[:, 3 * s + 2]
        pre, post = prefixes[s], prefixes[s + 1]
        if slot.kind == "u1":
            qubit = slot.qubits[0]
            _, deriv_mats = _u1_slot_matrices(t0, t1, t2)
            derivs = []
            for mat in deriv_mats:
                d = pre.copy()
                apply_matrix_1q(d, qubit, mat)
                derivs.append(d)
        else:
            qj, qk = slot.qubits
            derivs = []
            for kind in ("xx", "yy", "zz"):
                d = post.copy()
                apply_pauli_2q(d, qj, qk, kind)
                d *= 1j
                derivs.append(d)
        for local, d in enumerate(derivs):
            b[:, :, 3 * s + local] = np.einsum("bqd,bd->bq", lam.conj(), d)
        _apply_slot_dagger(lam, slot, t0[:, np.newaxis], t1[:, np.newaxis],
                           t2[:, np.newaxis])
    return a, b


def gradient_exact_batch(layout: CircuitLayout, angles,
                         selection: OutputSelection) -> np.ndarray:
    """Exact output-probability gradients, shape (B, Q1, M)."""
    angles = _check_angles(layout, np.atleast_2d(angles))
    a, b = _overlap_terms_batch(layout, angles, selection)
    return 2.0 * np.real(np.conj(a)[:, :, np.newaxis] * b)


def gradient_exact(layout: CircuitLayout, angles,
                   selection: OutputSelection) -> np.ndarray:
    """Exact gradient matrix d p_k / d w_m, shape (Q1, M)."""
    return gradient_exact_batch(layout, np.asarray(angles)[np.newaxis], selection)[0]


def shifted_angles(layout: CircuitLayout, angles, param_index: int) -> np.ndarray:
    """Angles with entry ``param_index`` increased by pi/2, no wrapping.

    Valid only for single-qubit-slot parameters, where the shifted circuit
    state equals the generator-insertion derivative vector exactly. Pair-slot
    parameters have no such single-angle shift here and raise
    ``UnsupportedShiftError``.
    """
    arr = _check_angles(layout, angles).copy()
    if not 0 <= param_index < layout.num_params:
        raise IndexError(f"parameter index {param_index} out of range")
    if layout.slots[param_index // 3].kind != "u1":
        raise UnsupportedShiftError(
            f"parameter {param_index} belongs to a pair slot; the pi/2 shift "
            "identity is only implemented for single-qubit slots")
    arr[param_index] += HALF_PI
    return arr


def derivative_state(layout: CircuitLayout, angles, param_index: int) -> np.ndarray:
    """Derivative-direction vector W'_m|0...0> as a (2^N,) complex array.

    Built forward: run the circuit up to the parameter's slot, apply the
    slot with i times its generator inserted, then run the remaining slots.
    Independent of the backward-sweep path used by ``gradient_exact``.
    """
    angles = _check_angles(layout, angles)
    if not 0 <= param_index < layout.num_params:
        raise IndexError(f"parameter index {param_index} out of range")
    s, local = divmod(param_index, 3)
    amps = zero_state_array(layout.num_qubits, (1,))
    for i in range(s):
        slot = layout.slots[i]
        _apply_slot(amps, slot, angles[3 * i], angles[3 * i + 1], angles[3 * i + 2])
    slot = layout.slots[s]
    t = angles[3 * s:3 * s + 3]
    if slot.kind == "u1":
        _, derivs = _u1_slot_matrices(t[0], t[1], t[2])
        apply_matrix_1q(amps, slot.qubits[0], derivs[local])
    else:
        _apply_slot(amps, slot, t[0], t[1], t[2])
        apply_pauli_2q(amps, slot.qubits[0], slot.qubits[1],
                       ("xx", "yy", "zz")[local])
        amps *= 1j
    for i in range(s + 1, len(layout.slots)):
        slot = layout.slots[i]
        _apply_slot(amps, slot, angles[3 * i], angles[3 * i + 1], angles[3 * i + 2])
    return amps[0]


# --- shot-sampled Hadamard-test estimation --------------------------------

@dataclass(frozen=True)
class HadamardEstimates:
    """Shot estimates of the overlap expectation values behind one gradient.

    ``r``/``i`` hold the real and imaginary parts of <0|W^dag|k> per selected
    output k; ``r_shift``/``i_shift`` hold the same for the derivative
    circuits, per (k, m). Every entry lies in [-1, 1].
    """

    r: np.ndarray
    i: np.ndarray
    r_shift: np.ndarray
    i_shift: np.ndarray
    shots_per_estimate: int


def exact_overlap_values(layout: CircuitLayout, angles,
                         selection: OutputSelection):
    """Noise-free values of (r, i, r_shift, i_shift) for the selected outputs."""
    angles = _check_angles(layout, np.atleast_2d(angles))
    a, b = _overlap_terms_batch(layout, angles, selection)
    # <0|W^dag|k> = conj(<k|W|0>), so r = Re a and i = -Im a.
    return np.real(a[0]), -np.imag(a[0]), np.real(b[0]), np.imag(b[0])


def _estimate(values: np.ndarray, shots: int, rng) -> np.ndarray:
    """Empirical mean of ``shots`` +-1 Bernoulli outcomes per entry."""
    p = np.clip((1.0 + values) / 2.0, 0.0, 1.0)
    freq = rng.binomial(shots, p) / shots
    return 2.0 * freq - 1.0


def sampled_estimates_from_values(r, i, r_shift, i_shift, shots: int,
                                  rng: np.random.Generator) -> HadamardEstimates:
    """Draw one set of shot estimates from precomputed exact overlap values.

    Lets many trial seeds reuse a single circuit evaluation. Draws happen in
    the fixed order (r, i, r_shift, i_shift) from the given generator.
    """
    if shots < 1:
        raise ValueError(f"shots must be at least 1, got {shots}")
    return HadamardEstimates(
        r=_estimate(r, shots, rng),
        i=_estimate(i, shots, rng),
        r_shift=_estimate(r_shift, shots, rng),
        i_shift=_estimate(i_shift, shots, rng),
        shots_per_estimate=shots,
    )


def sample_hadamard_estimates(layout: CircuitLayout, angles,
                              selection: OutputSelection, shots: int,
                              rng_seed) -> HadamardEstimates:
    """Simulate the 2*Q1*(M+1) Hadamard-test estimates at ``shots`` each.

    Each expectation value v is estimated independently from ``shots``
    Bernoulli draws with success probability (1+v)/2, mapped back through
    2*f - 1. The draw order is fixed, so results are bit-reproducible for a
    fixed seed.
    """
    values = exact_overlap_values(layout, angles, selection)
    return sampled_estimates_from_values(*values, shots=shots,
                                         rng=np.random.default_rng(rng_seed))


def gradient_from_estimates(est: HadamardEstimates) -> np.ndarray:
    """Combine overlap estimates into a gradient: 2 (r r~ - i i~) per entry."""
    return 2.0 * (est.r[:, np.newaxis] * est.r_shift
                  - est.i[:, np.newaxis] * est.i_shift)


def gradient_sampled(layout: CircuitLayout, angles, selection: OutputSelection,
                     shots: int, rng_seed) -> np.ndarray:
    """Shot-noise Monte-Carlo gradient estimate, shape (Q1, M).

    Each overlap factor is estimated independently and without bias; the
    per-entry product combination is therefore also unbiased, with variance
    that carries an extra O(1/shots^2) cross term on top of the usual
    O(1/shots) decay.
    """
    return gradient_from_estimates(
        sample_hadamard_estimates(layout, angles, selection, shots, rng_seed))


# --- resource accounting ---------------------------------------------------

def circuit_count(layout: CircuitLayout, selection: OutputSelection) -> int:
    """Circuits needed per gradient: min[2^N M, 2 Q1 (M+1)]."""
    m = layout.num_params
    q1 = selection.num_outputs(layout.num_qubits)
    return min((1 << layout.num_qubits) * m, 2 * q1 * (m + 1))


@dataclass(frozen=True)
class ComplexityQuery:
    """Inputs of the gradient sample-count bound Q1*M*maxvar/eps^2."""

    q1: int
    num_params: int
    epsilon: float
    max_variance: float

    def __post_init__(self):
        if self.q1 < 1 or self.num_params < 1:
            raise ValueError("q1 and num_params must be positive")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.max_variance > 0:
            raise ValueError(
                f"max_variance must be positive, got {self.max_variance}")


def sample_bound(query: ComplexityQuery) -> int:
    """Shots per estimate keeping the mean-squared gradient error at eps^2."""
    return math.ceil(query.q1 * query.num_params * query.max_variance
                     / query.epsilon ** 2)
