import numpy as np
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal, Union
from scipy.spatial.transform import Rotation

from src.config.errors import InvalidSequenceError

if TYPE_CHECKING:
    from src.solver.sequence import PulseSequence

# Scalars or numpy arrays; every operation broadcasts over leading shapes
ComplexLike = Union[complex, np.ndarray]
Frame = Literal["original", "adiabatic"]

# =======================
# === DOMAIN TYPES    ===
# =======================

@dataclass(frozen=True)
class Su2Operator:
    """2x2 operator stored as coefficients over {I, sigma_x, sigma_y, sigma_z}.

    M = aI I + ax sigma_x + ay sigma_y + az sigma_z. Coefficients may be numpy
    arrays, in which case the instance holds a batch of operators.
    """

    aI: ComplexLike
    ax: ComplexLike
    ay: ComplexLike
    az: ComplexLike

    def matrix(self) -> np.ndarray:
        """Materialize the 2x2 matrix (shape (..., 2, 2) for batches)."""
        aI, ax, ay, az = np.broadcast_arrays(*(np.asarray(c, dtype=complex) for c in self.coefficients()))
        return np.stack(
            [
                np.stack([aI + az, ax - 1j * ay], axis=-1),
                np.stack([ax + 1j * ay, aI - az], axis=-1),
            ],
            axis=-2,
        )

    def coefficients(self) -> tuple:
        """Coefficients in basis order.

        Returns:
            tuple: (aI, ax, ay, az), scalars or broadcastable arrays.
        """
        return self.aI, self.ax, self.ay, self.az

    def dagger(self) -> "Su2Operator":
        # Pauli matrices are Hermitian, so the adjoint conjugates every coefficient
        return Su2Operator(*(np.conj(c) for c in self.coefficients()))

    def determinant(self) -> ComplexLike:
        """det M = aI^2 - ax^2 - ay^2 - az^2, equal to 1 on SU(2)."""
        return self.aI ** 2 - self.ax ** 2 - self.ay ** 2 - self.az ** 2


@dataclass(frozen=True)
class SpinState:
    """Two-level amplitudes tagged with the frame they are expressed in."""

    c1: complex
    c2: complex
    frame: Frame = "adiabatic"

    def __post_init__(self) -> None:
        if self.frame not in ("original", "adiabatic"):
            raise ValueError(f"unknown frame '{self.frame}'")

    def norm(self) -> float:
        """Euclidean norm of the amplitude pair."""
        return float(np.sqrt(abs(self.c1) ** 2 + abs(self.c2) ** 2))

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2], dtype=complex)


@dataclass(frozen=True)
class BlochVector:
    """Expectation values of sigma_x, sigma_y, sigma_z."""

    sx: float
    sy: float
    sz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz], dtype=float)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


IDENTITY = Su2Operator(1.0 + 0j, 0j, 0j, 0j)
SIGMA_X = Su2Operator(0j, 1.0 + 0j, 0j, 0j)
SIGMA_Y = Su2Operator(0j, 0j, 1.0 + 0j, 0j)
SIGMA_Z = Su2Operator(0j, 0j, 0j, 1.0 + 0j)


# ==========================
# === PAULI ALGEBRA      ===
# ==========================

def pauli_compose(p: Su2Operator, q: Su2Operator) -> Su2Operator:
    """Coefficients of the matrix product p q.

    Uses sigma_a sigma_b = delta_ab I + i eps_abc sigma_c, i.e.
    (p0 q0 + p.q, p0 q + q0 p + i p x q).

    Args:
        p (Su2Operator): Left factor.
        q (Su2Operator): Right factor.

    Returns:
        Su2Operator: The product, broadcast over batch shapes.
    """
    p0, p1, p2, p3 = p.coefficients()
    q0, q1, q2, q3 = q.coefficients()

    return Su2Operator(
        aI=p0 * q0 + p1 * q1 + p2 * q2 + p3 * q3,
        ax=p0 * q1 + q0 * p1 + 1j * (p2 * q3 - p3 * q2),
        ay=p0 * q2 + q0 * p2 + 1j * (p3 * q1 - p1 * q3),
        az=p0 * q3 + q0 * p3 + 1j * (p1 * q2 - p2 * q1),
    )


def conjugate_literal(u: Su2Operator, sigma: Su2Operator) -> Su2Operator:
    """Sandwich u sigma u, without an adjoint on the right factor."""
    return pauli_compose(pauli_compose(u, sigma), u)


def coefficients_from_matrix(matrix: np.ndarray) -> Su2Operator:
    """Trace-based extraction a_k = Tr(sigma_k M) / 2 of a (..., 2, 2) array."""
    m = np.asarray(matrix, dtype=complex)
    m00, m01 = m[..., 0, 0], m[..., 0, 1]
    m10, m11 = m[..., 1, 0], m[..., 1, 1]

    return Su2Operator(
        aI=0.5 * (m00 + m11),
        ax=0.5 * (m01 + m10),
        ay=0.5j * (m01 - m10),
        az=0.5 * (m00 - m11),
    )


def unitarity_error(op: Su2Operator) -> float:
    """Largest entry of |M^dagger M - I| over the whole batch."""
    m = op.matrix()
    gram = np.conj(np.swapaxes(m, -1, -2)) @ m
    return float(np.max(np.abs(gram - np.eye(2))))


# ==========================
# === PROPAGATORS        ===
# ==========================

def on_propagator(tau, v) -> Su2Operator:
    """Propagator of an 'on' pulse of rescaled duration tau at amplitude v.

    exp(-i tau (sigma_z - v sigma_y) / 2) with omega = sqrt(1 + v^2),
    n_y = v / omega and n_z = 1 / omega.

    Args:
        tau: Rescaled duration(s), >= 0.
        v: Control amplitude(s), >= 0.

    Returns:
        Su2Operator: (cos(omega tau/2), 0, i n_y sin(omega tau/2), -i n_z sin(omega tau/2)).
    """
    tau = np.asarray(tau, dtype=float)
    v = np.asarray(v, dtype=float)

    omega = np.sqrt(1.0 + v ** 2)
    half = 0.5 * omega * tau
    sin_half = np.sin(half)

    return Su2Operator(
        aI=np.cos(half) + 0j,
        ax=np.zeros(np.broadcast(tau, v).shape, dtype=complex),
        ay=1j * (v / omega) * sin_half,
        az=-1j * sin_half / omega,
    )


def off_propagator(tau) -> Su2Operator:
    """Free sigma_z precession exp(-i tau sigma_z / 2) of an 'off' pulse."""
    tau = np.asarray(tau, dtype=float)
    zeros = np.zeros(tau.shape, dtype=complex)

    return Su2Operator(aI=np.cos(0.5 * tau) + 0j, ax=zeros, ay=zeros, az=-1j * np.sin(0.5 * tau))


def compose_sequence(tau1, tau2, tau3, v, m: int) -> Su2Operator:
    """Product U1 W2 (U3 W2)^(m-1) U1 for batches of durations at fixed m.

    Args:
        tau1: Boundary on-pulse duration(s).
        tau2: Off-pulse duration(s).
        tau3: Interior on-pulse duration(s), unused when m = 1.
        v: Control amplitude(s).
        m (int): Number of off-pulses.

    Returns:
        Su2Operator: Total propagator.

    Raises:
        InvalidSequenceError: If m < 1.
    """
    if m < 1:
        raise InvalidSequenceError(f"a sequence needs at least one off-pulse, got m={m}")

    boundary = on_propagator(tau1, v)
    off = off_propagator(tau2)
    interior = on_propagator(tau3, v)

    total = pauli_compose(boundary, off)
    for _ in range(m - 1):
        total = pauli_compose(pauli_compose(total, interior), off)

    return pauli_compose(total, boundary)


def sequence_propagator(seq: "PulseSequence") -> Su2Operator:
    """Total propagator of a pulse sequence."""
    return compose_sequence(seq.tau1, seq.tau2, seq.tau3, seq.v, seq.m)


# ======================
# === STATES         ===
# ======================

def apply(op: Su2Operator, state: SpinState) -> SpinState:
    """Matrix-vector product M (c1, c2), keeping the frame tag."""
    aI, ax, ay, az = (complex(c) for c in op.coefficients())

    return SpinState(
        c1=(aI + az) * state.c1 + (ax - 1j * ay) * state.c2,
        c2=(ax + 1j * ay) * state.c1 + (aI - az) * state.c2,
        frame=state.frame,
    )


def state_to_bloch(state: SpinState) -> BlochVector:
    """Bloch vector s_x = 2 Re(c1* c2), s_y = 2 Im(c1* c2), s_z = |c1|^2 - |c2|^2."""
    overlap = np.conj(state.c1) * state.c2

    return BlochVector(
        sx=float(2.0 * overlap.real),
        sy=float(2.0 * overlap.imag),
        sz=float(abs(state.c1) ** 2 - abs(state.c2) ** 2),
    )


def rotate3(axis, angle: float, vec) -> np.ndarray:
    """Right-handed rotation of vec by angle about a unit axis.

    Raises:
        ValueError: If |axis| differs from 1 by more than 1e-10.
    """
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"rotation axis must be a unit vector, |axis| = {norm}")

    return Rotation.from_rotvec(angle * axis).apply(np.asarray(vec, dtype=float))
