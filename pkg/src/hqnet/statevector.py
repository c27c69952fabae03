"""Dense complex statevector of an N-qubit register and its gate kernels.

Bit convention, fixed once for the whole package: qubit k is bit k of the
basis index, so qubit 0 is the least significant bit and basis state
|q_{N-1} ... q_1 q_0> lives at index sum_k q_k 2^k.

The low-level kernels (``apply_matrix_1q``, ``apply_pair_rotation``,
``apply_pauli_1q``, ``apply_pauli_2q``) update a complex128 numpy array in
place along its last axis; any leading axes are independent batch entries,
and per-entry angles broadcast against those axes. The ``StateVector``
operations below wrap the kernels with value semantics (they return a new
state and never touch the input).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 12


def _num_qubits_of(amps: np.ndarray) -> int:
    dim = amps.shape[-1]
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise ValueError(f"amplitude axis has length {dim}, not a power of two")
    return n


def _reshaped(amps: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    view = amps.reshape(shape)
    if view.base is None:
        raise ValueError("amplitude array must be C-contiguous for in-place kernels")
    return view


def u1_matrix(alpha, beta, gamma) -> np.ndarray:
    """2x2 matrix exp(i*alpha*Y) exp(i*beta*Z) exp(i*gamma*Y).

    Angle arguments may be scalars or broadcastable arrays; the result has
    shape broadcast(...) + (2, 2).
    """
    return _yzy_product(alpha, np.exp(1j * np.asarray(beta)),
                        np.exp(-1j * np.asarray(beta)), gamma)


def _yzy_product(alpha, mid00, mid11, gamma) -> np.ndarray:
    """exp(i*alpha*Y) @ diag(mid00, mid11) @ exp(i*gamma*Y) for broadcast angles."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cg, sg = np.cos(gamma), np.sin(gamma)
    shape = np.broadcast_shapes(np.shape(ca), np.shape(mid00), np.shape(cg))
    out = np.empty(shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = ca * mid00 * cg - sa * mid11 * sg
    out[..., 0, 1] = ca * mid00 * sg + sa * mid11 * cg
    out[..., 1, 0] = -sa * mid00 * cg - ca * mid11 * sg
    out[..., 1, 1] = -sa * mid00 * sg + ca * mid11 * cg
    return out


def apply_matrix_1q(amps: np.ndarray, qubit: int, mat: np.ndarray) -> None:
    """Apply a 2x2 matrix to one qubit of every state in ``amps``, in place.

    ``mat`` is either a single (2, 2) matrix or an array of per-entry
    matrices whose leading shape broadcasts against ``amps.shape[:-1]``.
    """
    n = _num_qubits_of(amps)
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n}-qubit state")
    outer, inner = 1 << (n - 1 - qubit), 1 << qubit
    v = _reshaped(amps, amps.shape[:-1] + (outer, 2, inner))
    mat = np.asarray(mat)
    if mat.ndim == 2:
        m00, m01, m10, m11 = mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]
    else:
        m00 = mat[..., 0, 0, np.newaxis, np.newaxis]
        m01 = mat[..., 0, 1, np.newaxis, np.newaxis]
        m10 = mat[..., 1, 0, np.newaxis, np.newaxis]
        m11 = mat[..., 1, 1, np.newaxis, np.newaxis]
    a0, a1 = v[..., 0, :], v[..., 1, :]
    new0 = m00 * a0 + m01 * a1
    new1 = m10 * a0 + m11 * a1
    v[..., 0, :] = new0
    v[..., 1, :] = new1


def _pair_view(amps: np.ndarray, qubit_j: int, qubit_k: int):
    n = _num_qubits_of(amps)
    if not (0 <= qubit_j < n and 0 <= qubit_k < n):
        raise IndexError(f"qubit pair ({qubit_j},{qubit_k}) out of range for {n} qubits")
    if qubit_j == qubit_k:
        raise ValueError("two-qubit operation needs distinct qubits")
    hi, lo = max(qubit_j, qubit_k), min(qubit_j, qubit_k)
    o1, o2, o3 = 1 << (n - 1 - hi), 1 << (hi - lo - 1), 1 << lo
    return _reshaped(amps, amps.shape[:-1] + (o1, 2, o2, 2, o3))


def _pair_coeff(x):
    """Shape an angle-derived coefficient so it broadcasts over a pair view."""
    x = np.asarray(x)
    return x if x.ndim == 0 else x[..., np.newaxis, np.newaxis, np.newaxis]


def apply_pair_rotation(amps: np.ndarray, qubit_j: int, qubit_k: int,
                        theta, phi, eta) -> None:
    """Apply exp(i*theta*XX + i*phi*YY + i*eta*ZZ) on a qubit pair, in place.

    The three generators commute, and the product splits into two invariant
    2x2 blocks: on span{|00>,|11>} it acts as e^{i*eta} times an X-rotation
    by (theta - phi), on span{|01>,|10>} as e^{-i*eta} times an X-rotation
    by (theta + phi). Angles may be scalars or broadcast arrays.
    """
    v = _pair_view(amps, qubit_j, qubit_k)
    theta, phi, eta = np.asarray(theta), np.asarray(phi), np.asarray(eta)
    cd, sd = _pair_coeff(np.cos(theta - phi)), _pair_coeff(1j * np.sin(theta - phi))
    cs, ss = _pair_coeff(np.cos(theta + phi)), _pair_coeff(1j * np.sin(theta + phi))
    pp, pm = _pair_coeff(np.exp(1j * eta)), _pair_coeff(np.exp(-1j * eta))
    a00, a11 = v[..., 0, :, 0, :], v[..., 1, :, 1, :]
    a01, a10 = v[..., 0, :, 1, :], v[..., 1, :, 0, :]
    new00 = pp * (cd * a00 + sd * a11)
    new11 = pp * (sd * a00 + cd * a11)
    new01 = pm * (cs * a01 + ss * a10)
    new10 = pm * (ss * a01 + cs * a10)
    v[..., 0, :, 0, :] = new00
    v[..., 1, :, 1, :] = new11
    v[..., 0, :, 1, :] = new01
    v[..., 1, :, 0, :] = new10


def apply_pauli_1q(amps: np.ndarray, qubit: int, kind: str) -> None:
    """Multiply by a single Pauli X, Y, or Z on ``qubit``, in place."""
    n = _num_qubits_of(amps)
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n}-qubit state")
    outer, inner = 1 << (n - 1 - qubit), 1 << qubit
    v = _reshaped(amps, amps.shape[:-1] + (outer, 2, inner))
    a0 = v[..., 0, :].copy()
    if kind == "x":
        v[..., 0, :] = v[..., 1, :]
        v[..., 1, :] = a0
    elif kind == "y":
        v[..., 0, :] = -1j * v[..., 1, :]
        v[..., 1, :] = 1j * a0
    elif kind == "z":
        v[..., 1, :] *= -1.0
    else:
        raise ValueError(f"unknown Pauli kind {kind!r}")


def apply_pauli_2q(amps: np.ndarray, qubit_j: int, qubit_k: int, kind: str) -> None:
    """Multiply by XX, YY, or ZZ on a qubit pair, in place."""
    v = _pair_view(amps, qubit_j, qubit_k)
    if kind == "zz":
        v[..., 0, :, 1, :] *= -1.0
        v[..., 1, :, 0, :] *= -1.0
        return
    a00 = v[..., 0, :, 0, :].copy()
    a01 = v[..., 0, :, 1, :].copy()
    if kind == "xx":
        v[..., 0, :, 0, :] = v[..., 1, :, 1, :]
        v[..., 1, :, 1, :] = a00
        v[..., 0, :, 1, :] = v[..., 1, :, 0, :]
        v[..., 1, :, 0, :] = a01
    elif kind == "yy":
        # YY|00> = -|11>, YY|11> = -|00>, YY|01> = |10>, YY|10> = |01>
        v[..., 0, :, 0, :] = -v[..., 1, :, 1, :]
        v[..., 1, :, 1, :] = -a00
        v[..., 0, :, 1, :] = v[..., 1, :, 0, :]
        v[..., 1, :, 0, :] = a01
    else:
        raise ValueError(f"unknown Pauli pair kind {kind!r}")


def zero_state_array(num_qubits: int, lead: tuple[int, ...] = ()) -> np.ndarray:
    """|0...0> amplitudes, optionally replicated over leading batch axes."""
    amps = np.zeros(lead + (1 << num_qubits,), dtype=np.complex128)
    amps[..., 0] = 1.0
    return amps


# --- gate and generator descriptions -------------------------------------

@dataclass(frozen=True)
class GateU1:
    """Single-qubit YZY Euler rotation exp(i*a*Y) exp(i*b*Z) exp(i*g*Y)."""

    qubit: int
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if self.qubit < 0:
            raise IndexError(f"qubit index must be non-negative, got {self.qubit}")
        for name in ("alpha", "beta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"angle {name} must be finite")


@dataclass(frozen=True)
class GateU2:
    """Two-qubit rotation exp(i*theta*XX + i*phi*YY + i*eta*ZZ)."""

    qubit_j: int
    qubit_k: int
    theta: float
    phi: float
    eta: float

    def __post_init__(self):
        if self.qubit_j < 0 or self.qubit_k < 0:
            raise IndexError("qubit indices must be non-negative")
        if self.qubit_j == self.qubit_k:
            raise ValueError("two-qubit gate needs distinct qubits")
        for name in ("theta", "phi", "eta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"angle {name} must be finite")


_GENERATOR_KINDS_1Q = ("y", "z")
_GENERATOR_KINDS_2Q = ("xx", "yy", "zz")


@dataclass(frozen=True)
class PauliGenerator:
    """A Pauli string appearing as a rotation generator: Y_k, Z_k, XX, YY or ZZ."""

    kind: str
    qubits: tuple[int, ...]

    def __post_init__(self):
        if self.kind in _GENERATOR_KINDS_1Q:
            if len(self.qubits) != 1:
                raise ValueError(f"generator {self.kind} takes one qubit")
        elif self.kind in _GENERATOR_KINDS_2Q:
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ValueError(f"generator {self.kind} takes two distinct qubits")
        else:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if any(q < 0 for q in self.qubits):
            raise IndexError("qubit indices must be non-negative")


# --- the statevector itself ----------------------------------------------

@dataclass
class StateVector:
    """Amplitudes of an N-qubit register over the 2^N computational basis states."""

    num_qubits: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def init_zero(num_qubits: int) -> StateVector:
    """Reference state |0...0> on ``num_qubits`` qubits."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(
            f"num_qubits must be between 1 and {MAX_QUBITS}, got {num_qubits}")
    return StateVector(num_qubits, zero_state_array(num_qubits))


def apply_u1(state: StateVector, gate: GateU1) -> StateVector:
    """New state with the YZY rotation applied (gamma rotation acts first)."""
    if gate.qubit >= state.num_qubits:
        raise IndexError(
            f"qubit {gate.qubit} out of range for {state.num_qubits}-qubit state")
    amps = state.amplitudes.copy()
    apply_matrix_1q(amps, gate.qubit, u1_matrix(gate.alpha, gate.beta, gate.gamma))
    return StateVector(state.num_qubits, amps)


def apply_u2(state: StateVector, gate: GateU2) -> StateVector:
    """New state with the pair rotation exp(i(theta XX + phi YY + eta ZZ)) applied."""
    if gate.qubit_j >= state.num_qubits or gate.qubit_k >= state.num_qubits:
        raise IndexError(
            f"qubit pair ({gate.qubit_j},{gate.qubit_k}) out of range for "
            f"{state.num_qubits}-qubit state")
    amps = state.amplitudes.copy()
    apply_pair_rotation(amps, gate.qubit_j, gate.qubit_k,
                        gate.theta, gate.phi, gate.eta)
    return StateVector(state.num_qubits, amps)


def apply_generator(state: StateVector, gen: PauliGenerator) -> StateVector:
    """New state multiplied by the Pauli string.

    Used inside gradient evaluation to form derivative-direction vectors;
    Pauli strings are unitary so the norm is still preserved, but the result
    is generally not a physical circuit state.
    """
    if any(q >= state.num_qubits for q in gen.qubits):
        raise IndexError(
            f"generator qubits {gen.qubits} out of range for "
            f"{state.num_qubits}-qubit state")
    amps = state.amplitudes.copy()
    if gen.kind in _GENERATOR_KINDS_1Q:
        apply_pauli_1q(amps, gen.qubits[0], gen.kind)
    else:
        apply_pauli_2q(amps, gen.qubits[0], gen.qubits[1], gen.kind)
    return StateVector(state.num_qubits, amps)


def probabilities(state: StateVector) -> np.ndarray:
    """Measurement probabilities |amplitude_k|^2 over all basis states."""
    return np.abs(state.amplitudes) ** 2


def amplitude(state: StateVector, basis_index: int) -> complex:
    """Amplitude of one computational basis state."""
    if not 0 <= basis_index < state.amplitudes.shape[-1]:
        raise IndexError(
            f"basis index {basis_index} out of range for "
            f"{state.num_qubits}-qubit state")
    return complex(state.amplitudes[basis_index])
