import math
import numpy as np
from typing import List, Tuple
from pydantic import BaseModel, ConfigDict, model_validator

from src.config.config import ANGLE_EDGE, DEFAULT_K_MAX, DEFAULT_OMEGA_RABI
from src.config.errors import BoundaryConditionError
from src.algebra.su2core import SpinState, on_propagator

# ==========================
# === BOUNDARY CONDITIONS ===
# ==========================

class BoundaryConditions(BaseModel):
    """Initial and final field angles of the passage plus the Rabi frequency.

    The field angle obeys cot(theta) = Delta / Omega. The passage runs from
    theta_i (negative detuning side) down to theta_f.

    Direct construction and model_validate report invalid angles as a
    pydantic ValidationError. Use from_angles or angles_from_detunings to get
    a BoundaryConditionError instead.
    """

    model_config = ConfigDict(frozen=True)

    theta_i: float
    theta_f: float
    omega_rabi: float = DEFAULT_OMEGA_RABI

    @model_validator(mode="after")
    def _check_angles(self) -> "BoundaryConditions":
        check_angles(self.theta_i, self.theta_f, self.omega_rabi)
        return self

    @classmethod
    def from_angles(cls, theta_i: float, theta_f: float,
                    omega_rabi: float = DEFAULT_OMEGA_RABI) -> "BoundaryConditions":
        """Build boundary conditions from field angles.

        Args:
            theta_i (float): Initial field angle, inside (0, pi).
            theta_f (float): Final field angle, smaller than theta_i.
            omega_rabi (float): Rabi frequency.

        Returns:
            BoundaryConditions: The validated record.

        Raises:
            BoundaryConditionError: If the angles or omega_rabi are out of range.
        """
        # Checked before pydantic so the caller sees the domain error unwrapped
        check_angles(theta_i, theta_f, omega_rabi)
        return cls(theta_i=theta_i, theta_f=theta_f, omega_rabi=omega_rabi)

    @property
    def delta_theta(self) -> float:
        """Total angle swept, theta_i - theta_f."""
        return self.theta_i - self.theta_f

    @property
    def theta_bar(self) -> float:
        """Midpoint angle of the arc between the boundary states."""
        return 0.5 * (self.theta_i + self.theta_f)

    @property
    def delta_i(self) -> float:
        """Initial detuning in the units of omega_rabi."""
        return detuning_from_angle(self.theta_i, self.omega_rabi)

    @property
    def delta_f(self) -> float:
        """Final detuning in the units of omega_rabi."""
        return detuning_from_angle(self.theta_f, self.omega_rabi)


class RcResonance(BaseModel):
    """Constant-control Roland-Cerf pair with exact return to the adiabatic state."""

    model_config = ConfigDict(frozen=True)

    k: int
    u_k: float
    T_k: float
    T_tilde_k: float

    def shortcut_residual(self) -> float:
        """|T_k sqrt(1 + u_k^2) - 2 k pi|."""
        return abs(self.T_k * math.sqrt(1.0 + self.u_k ** 2) - 2.0 * self.k * math.pi)

    def angle_residual(self, delta_theta: float) -> float:
        """|u_k T_k - delta_theta|."""
        return abs(self.u_k * self.T_k - delta_theta)


class DurationBounds(BaseModel):
    """Lower bounds on the passage duration."""

    model_config = ConfigDict(frozen=True)

    theta_bar: float
    T0_rescaled: float
    T0_physical: float
    T_qsl_physical: float


# =====================
# === FIELD ANGLES  ===
# =====================

def check_angles(theta_i: float, theta_f: float, omega_rabi: float) -> None:
    """Reject boundary angles that cannot describe a passage.

    Raises:
        BoundaryConditionError: If omega_rabi is not a positive finite number,
            an angle leaves (0, pi), or theta_i <= theta_f.
    """
    # Omega sets the time unit; it must be a positive finite number
    if not (math.isfinite(omega_rabi) and omega_rabi > 0):
        raise BoundaryConditionError(f"omega_rabi must be positive, got {omega_rabi}")

    # Angles must stay strictly inside (0, pi) so that sin(theta) > 0
    for name, angle in (("theta_i", theta_i), ("theta_f", theta_f)):
        if not math.isfinite(angle) or angle < ANGLE_EDGE or angle > math.pi - ANGLE_EDGE:
            raise BoundaryConditionError(f"{name}={angle} must lie inside (0, pi)")

    # The angle decreases during the passage
    if theta_i <= theta_f:
        raise BoundaryConditionError(f"theta_i ({theta_i}) must be larger than theta_f ({theta_f})")


def detuning_from_angle(theta, omega_rabi: float = DEFAULT_OMEGA_RABI):
    """Convert a field angle to a detuning, Delta = Omega cot(theta).

    Args:
        theta: Field angle(s) in radians, inside (0, pi).
        omega_rabi (float): Rabi frequency.

    Returns:
        Detuning(s) with the same shape as theta.
    """
    return omega_rabi * np.cos(theta) / np.sin(theta)


def angles_from_detunings(delta_i: float, delta_f: float,
                          omega_rabi: float = DEFAULT_OMEGA_RABI) -> BoundaryConditions:
    """Build boundary conditions from initial and final detunings.

    Args:
        delta_i (float): Initial detuning.
        delta_f (float): Final detuning, larger than delta_i.
        omega_rabi (float): Rabi frequency.

    Returns:
        BoundaryConditions: Angles mapped into (0, pi).

    Raises:
        BoundaryConditionError: If omega_rabi <= 0 or the detuning does not increase.
    """
    if not omega_rabi > 0:
        raise BoundaryConditionError(f"omega_rabi must be positive, got {omega_rabi}")

    # cot(theta) = Delta/Omega with sin(theta) > 0 picks theta = atan2(Omega, Delta)
    theta_i = math.atan2(omega_rabi, delta_i)
    theta_f = math.atan2(omega_rabi, delta_f)

    if theta_i <= theta_f:
        raise BoundaryConditionError(
            f"detuning must increase (delta_i={delta_i}, delta_f={delta_f}) so that theta_i > theta_f"
        )

    return BoundaryConditions.from_angles(theta_i, theta_f, omega_rabi)


def eigenstates(theta: float) -> Tuple[SpinState, SpinState]:
    """Instantaneous eigenvectors |phi_+>, |phi_-> in the original frame.

    Args:
        theta (float): Field angle.

    Returns:
        Tuple[SpinState, SpinState]: (|phi_+>, |phi_->).
    """
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return (
        SpinState(c1=complex(c), c2=complex(s), frame="original"),
        SpinState(c1=complex(s), c2=complex(-c), frame="original"),
    )


def energy_gap(theta, omega_rabi: float = DEFAULT_OMEGA_RABI):
    """Instantaneous gap g = sqrt(Delta^2 + Omega^2) = Omega / sin(theta)."""
    return omega_rabi / np.sin(theta)


def eigenenergies(theta, omega_rabi: float = DEFAULT_OMEGA_RABI):
    """Eigenvalues E_+ and E_- = +/- g/2."""
    half_gap = 0.5 * energy_gap(theta, omega_rabi)
    return half_gap, -half_gap


# ================================
# === ROLAND-CERF PROTOCOL     ===
# ================================

def rc_theta_profile(t, u: float, bc: BoundaryConditions):
    """Field angle under constant local adiabaticity u, theta(t) = acos(cos theta_i + u Omega t).

    Args:
        t: Physical time(s).
        u (float): Constant control amplitude.
        bc (BoundaryConditions): Boundary conditions (theta_i, Omega).

    Returns:
        Angle(s) in radians with the shape of t.

    Raises:
        ValueError: If the arccos argument leaves [-1, 1].
    """
    argument = math.cos(bc.theta_i) + u * bc.omega_rabi * np.asarray(t, dtype=float)

    # Allow round-off at the end point, reject anything beyond it
    if np.any(argument > 1.0 + 1e-12) or np.any(argument < -1.0 - 1e-12):
        raise ValueError("time outside the protocol: arccos argument leaves [-1, 1]")

    return np.arccos(np.clip(argument, -1.0, 1.0))


def rc_resonances(bc: BoundaryConditions, k_max: int = DEFAULT_K_MAX) -> List[RcResonance]:
    """Resonant amplitude/duration pairs of the constant-control protocol.

    Args:
        bc (BoundaryConditions): Boundary conditions.
        k_max (int): Number of resonances to return (k = 1..k_max).

    Returns:
        List[RcResonance]: One entry per k, exact formula evaluations.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")

    resonances = []
    for k in range(1, k_max + 1):
        # delta_theta < pi < 2 k pi keeps the square root real
        ratio = bc.delta_theta / (2.0 * k * math.pi)
        root = math.sqrt(1.0 - ratio ** 2)

        u_k = ratio / root
        T_k = 2.0 * k * math.pi * root
        T_tilde_k = (math.cos(bc.theta_f) - math.cos(bc.theta_i)) / u_k / bc.omega_rabi

        resonances.append(RcResonance(k=k, u_k=u_k, T_k=T_k, T_tilde_k=T_tilde_k))

    return resonances


def rc_error(bc: BoundaryConditions, u) -> np.ndarray:
    """Transfer error |b_2(T)|^2 of the constant-control protocol at any amplitude.

    The rescaled duration is fixed by the area, T = delta_theta / u; the error
    vanishes exactly at the resonant amplitudes.

    Args:
        bc (BoundaryConditions): Boundary conditions.
        u: Positive amplitude(s).

    Returns:
        np.ndarray: 1 - F for every amplitude.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("constant-control amplitudes must be positive")

    propagator = on_propagator(bc.delta_theta / u, u)
    return np.abs(propagator.ax) ** 2 + np.abs(propagator.ay) ** 2


# ======================
# === DURATION BOUNDS ===
# ======================

def compute_bounds(bc: BoundaryConditions) -> DurationBounds:
    """Lower bounds of the passage duration.

    Args:
        bc (BoundaryConditions): Boundary conditions.

    Returns:
        DurationBounds: T0 = pi in rescaled time, its physical value
        sin(theta_bar) pi / Omega, and the speed limit delta_theta / Omega.
    """
    theta_bar = bc.theta_bar

    return DurationBounds(
        theta_bar=theta_bar,
        T0_rescaled=math.pi,
        T0_physical=math.sin(theta_bar) * math.pi / bc.omega_rabi,
        T_qsl_physical=bc.delta_theta / bc.omega_rabi,
    )
