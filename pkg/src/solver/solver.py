import math
import numpy as np
import pandas as pd
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple
from joblib import Parallel, delayed
from scipy.optimize import bisect
from tqdm import tqdm

from src.config.config import (
    BRANCH_EPS,
    DEFAULT_M_MAX,
    DEFAULT_TOL,
    FIDELITY_FLOOR,
    MAX_BISECTIONS,
    MIN_SAMPLES,
    ROOT_ACCEPT,
    SCAN_A_MIN,
    SCAN_EPS,
    SCAN_POINTS,
    TIE_TOL,
    get_thread_count,
)
from src.config.errors import (
    ApforgeError,
    DegenerateBranchError,
    InvalidSequenceError,
    NoSolutionError,
    NumericalFailureError,
    UnconstrainedBranchError,
)
from src.algebra.su2core import SpinState, apply, compose_sequence, rotate3, sequence_propagator
from src.protocols.protocols import BoundaryConditions
from src.solver.sequence import Candidate, OptimalityForm, PulseSequence, Residuals, SolverResult
from src.dynamics.dynamics import fidelity_error, physical_duration

Z_AXIS = np.array([0.0, 0.0, 1.0])
Y_AXIS = np.array([0.0, 1.0, 0.0])


def _frequencies(v):
    """omega = sqrt(1 + v^2), n_y = v / omega, n_z = 1 / omega."""
    omega = np.sqrt(1.0 + np.asarray(v, dtype=float) ** 2)
    return omega, v / omega, 1.0 / omega


# ================================
# === OPTIMALITY CONDITION     ===
# ================================

def optimality_AB(tau1, tau3, v, form: OptimalityForm = "geometric") -> Tuple[np.ndarray, np.ndarray]:
    """Coefficients of the optimality condition A sin(tau2) + B (1 - cos(tau2)) = 0.

    B = n_y^2 sin(omega tau1) + n_z^2 sin(omega tau3) + n_y^2 sin(omega (tau3 - tau1)).

    The "geometric" A = n_z (1 - cos(omega tau3)) makes the condition
    equivalent to the coplanarity of the switching state with the two
    switching axes. The "published" A is
    (1 - cos(omega tau3)) [n_z + n_y^2 (n_y - n_z)(1 - cos(omega tau1))].

    Args:
        tau1: Boundary on-pulse duration(s).
        tau3: Interior on-pulse duration(s).
        v: Control amplitude(s).
        form (str): "geometric" or "published".

    Returns:
        Tuple[np.ndarray, np.ndarray]: (A, B), broadcast over the inputs.
    """
    omega, n_y, n_z = _frequencies(v)
    tau1 = np.asarray(tau1, dtype=float)
    tau3 = np.asarray(tau3, dtype=float)

    one_minus_c3 = 1.0 - np.cos(omega * tau3)

    if form == "geometric":
        A = n_z * one_minus_c3
    elif form == "published":
        A = one_minus_c3 * (n_z + n_y ** 2 * (n_y - n_z) * (1.0 - np.cos(omega * tau1)))
    else:
        raise ValueError(f"unknown optimality form '{form}'")

    B = (
        n_y ** 2 * np.sin(omega * tau1)
        + n_z ** 2 * np.sin(omega * tau3)
        + n_y ** 2 * np.sin(omega * (tau3 - tau1))
    )
    return A, B


def optimality_residual(tau1, tau2, tau3, v, form: OptimalityForm = "geometric"):
    """How far a duration triple is from satisfying the optimality condition.

    Args:
        tau1: Boundary on-pulse duration(s).
        tau2: Off-pulse duration(s).
        tau3: Interior on-pulse duration(s).
        v: Control amplitude(s).
        form (str): Optimality coefficient form.

    Returns:
        |A sin(tau2) + B (1 - cos(tau2))|, broadcast over the inputs.
    """
    A, B = optimality_AB(tau1, tau3, v, form)
    return np.abs(A * np.sin(tau2) + B * (1.0 - np.cos(tau2)))


def tau2_from_coefficients(A, B) -> np.ndarray:
    """tau2 = 2 arccot(-B/A) on the (0, pi) branch; nan where |A| vanishes."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)

    # cot(phi) = -B/A with sin(phi) > 0
    half = np.where(A > 0, np.arctan2(A, -B), np.arctan2(-A, B))
    return np.where(np.abs(A) < BRANCH_EPS, np.nan, 2.0 * half)


def tau2_from_optimality(tau1: float, tau3: float, v: float,
                         form: OptimalityForm = "geometric") -> float:
    """Off-pulse duration fixed by the optimality condition.

    Args:
        tau1 (float): Boundary on-pulse duration.
        tau3 (float): Interior on-pulse duration.
        v (float): Control amplitude.
        form (str): Optimality coefficient form.

    Returns:
        float: tau2 in (0, 2 pi).

    Raises:
        UnconstrainedBranchError: If A = B = 0.
        DegenerateBranchError: If A = 0 and B != 0.
    """
    A, B = (float(c) for c in optimality_AB(tau1, tau3, v, form))

    if abs(A) < BRANCH_EPS and abs(B) < BRANCH_EPS:
        raise UnconstrainedBranchError(f"A = B = 0 at tau1={tau1}, tau3={tau3}, v={v}")
    if abs(A) < BRANCH_EPS:
        raise DegenerateBranchError(f"A = 0 with B = {B} at tau1={tau1}, tau3={tau3}, v={v}")

    return float(tau2_from_coefficients(A, B))


def tau1_from_area(tau3: float, m: int, v: float, delta_theta: float) -> float:
    """Boundary on-pulse duration from the area v [2 tau1 + (m - 1) tau3] = delta_theta.

    Raises:
        ValueError: If v <= 0.
        InvalidSequenceError: If the resulting tau1 is not positive.
    """
    if not v > 0:
        raise ValueError(f"amplitude must be positive, got v={v}")

    interior = (m - 1) * tau3 if m > 1 else 0.0
    tau1 = 0.5 * (delta_theta / v - interior)

    if tau1 <= 0:
        raise InvalidSequenceError(f"tau3={tau3} leaves no room for the boundary pulses (tau1={tau1})")
    return tau1


# =============================
# === RETURN CONDITION      ===
# =============================

def ay_closed_form(m: int, tau1, tau2, tau3, v):
    """Closed-form sigma_y coefficient of the total propagator for m = 1, 2, 3.

    Args:
        m (int): Number of off-pulses.
        tau1, tau2, tau3: Durations (tau3 ignored for m = 1).
        v: Control amplitude.

    Returns:
        Purely imaginary value(s) of a_y.

    Raises:
        ValueError: If m > 3.
    """
    if m < 1:
        raise InvalidSequenceError(f"m must be >= 1, got {m}")
    if m > 3:
        raise ValueError(f"no closed form for m={m}, use ay_generic")

    omega, n_y, n_z = _frequencies(v)
    tau1 = np.asarray(tau1, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    tau3 = np.asarray(tau3, dtype=float)

    if m == 1:
        h = 0.5 * omega * tau1
        return 2j * n_y * np.sin(h) * (np.cos(h) * np.cos(tau2 / 2) - n_z * np.sin(h) * np.sin(tau2 / 2))

    s1, c1 = np.sin(omega * tau1), np.cos(omega * tau1)
    s2, c2 = np.sin(tau2), np.cos(tau2)

    # Shared brackets of the m = 2 and m = 3 expressions
    first = s1 * c2 - n_z * s2 * (1.0 - c1)
    second = -s1 * s2 + n_z * (1.0 - c1) * (1.0 - c2)

    if m == 2:
        half3 = 0.5 * omega * tau3
        return 1j * n_y * (np.cos(half3) * first + np.sin(half3) * (c1 + n_z * second))

    s3, c3 = np.sin(omega * tau3), np.cos(omega * tau3)
    ch, sh = np.cos(tau2 / 2), np.sin(tau2 / 2)

    return 1j * n_y * (
        (ch * c3 - n_z * sh * s3) * first
        + (n_z * ch * s3 + sh * (n_y ** 2 + n_z ** 2 * c3)) * second
        + (c1 * ch * s3 - n_z * sh * (1.0 - c1 * c3))
    )


def ay_generic(seq: PulseSequence) -> complex:
    """a_y = Tr(sigma_y U) / 2 of the composed sequence propagator, any m."""
    return complex(sequence_propagator(seq).ay)


def _ay_any(m: int, tau1, tau2, tau3, v):
    """a_y from the closed form when one exists, else from the composed product."""
    if m <= 3:
        return ay_closed_form(m, tau1, tau2, tau3, v)
    return compose_sequence(tau1, tau2, tau3, v, m).ay


# ==================================
# === SWITCHING-PLANE GEOMETRY   ===
# ==================================

def switching_state(tau1: float, tau2: float, v: float,
                    form: OptimalityForm = "geometric") -> np.ndarray:
    """Bloch vector after the first on pulse and the first off pulse, from the north pole.

    The "published" form carries n_y^2 where the rotation gives n_y n_z in
    the transverse entries; it is the vector whose coplanarity reproduces
    the published A coefficient.
    """
    omega, n_y, n_z = _frequencies(v)
    s1, c1 = math.sin(omega * tau1), math.cos(omega * tau1)
    s2, c2 = math.sin(tau2), math.cos(tau2)

    if form == "geometric":
        cross = n_y * n_z
    elif form == "published":
        cross = n_y ** 2
    else:
        raise ValueError(f"unknown optimality form '{form}'")

    return np.array([
        -n_y * s1 * c2 + cross * (1.0 - c1) * s2,
        -n_y * s1 * s2 - cross * (1.0 - c1) * c2,
        n_z ** 2 + n_y ** 2 * c1,
    ])


def switch_axes(tau2: float, tau3: float, v: float) -> Tuple[np.ndarray, np.ndarray]:
    """Images y1, y2 of the y axis under the off pulse and the interior on pulse."""
    omega, n_y, n_z = _frequencies(v)
    s3, c3 = math.sin(omega * tau3), math.cos(omega * tau3)

    y1 = np.array([-math.sin(tau2), math.cos(tau2), 0.0])
    y2 = np.array([n_z * s3, n_y ** 2 + n_z ** 2 * c3, -n_y * n_z * (1.0 - c3)])
    return y1, y2


def coplanarity_determinant(tau1: float, tau2: float, tau3: float, v: float,
                            form: OptimalityForm = "geometric") -> float:
    """det(y - y1, y - y2, s) with s the switching state; zero on optimal switches."""
    y1, y2 = switch_axes(tau2, tau3, v)
    s = switching_state(tau1, tau2, v, form)
    return float(np.linalg.det(np.array([Y_AXIS - y1, Y_AXIS - y2, s])))


@dataclass(frozen=True)
class AdjointGeometry:
    """Adjoint vector phi with multiplier mu; switches happen on the plane phi_y = -mu."""

    mu: float
    phi: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.phi))

    def sphere_radius(self) -> float:
        """Radius of the sphere phi_x^2 + (phi_y - mu)^2 + phi_z^2."""
        return float(np.linalg.norm(self.phi - self.mu * Y_AXIS))

    def plane_offset(self) -> float:
        """Signed distance from the switching plane phi_2 = -mu."""
        return float(self.phi[1] + self.mu)

    def evolve_off(self, tau: float) -> "AdjointGeometry":
        """Free precession: rotate phi about z by tau."""
        return AdjointGeometry(self.mu, rotate3(Z_AXIS, tau, self.phi))

    def evolve_on(self, tau: float, v: float) -> "AdjointGeometry":
        """Driven segment: rotate phi about (0, v, 1) / omega by omega tau."""
        omega = math.sqrt(1.0 + v ** 2)
        axis = np.array([0.0, v, 1.0]) / omega
        return AdjointGeometry(self.mu, rotate3(axis, omega * tau, self.phi))


def first_return_angle(p: np.ndarray) -> float:
    """Rotation about z taking p to its mirror (-p1, p2, p3), in [0, 2 pi)."""
    return float((math.pi - 2.0 * math.atan2(p[1], p[0])) % (2.0 * math.pi))


def plane_return_time(q: np.ndarray, v: float) -> float:
    """Duration of the on pulse that brings q back to the plane it starts on.

    The circle traced about n = (0, v, 1) / omega crosses the plane
    phi_y = q_y at q and at one more point, reached after the rotation
    angle 2 atan2(w_y, r_y) with r the part of q normal to n and w = n x r.
    """
    omega = math.sqrt(1.0 + v ** 2)
    axis = np.array([0.0, v, 1.0]) / omega

    r = q - np.dot(q, axis) * axis
    w = np.cross(axis, r)
    angle = (2.0 * math.atan2(w[1], r[1])) % (2.0 * math.pi)

    # Tangent circle: the only crossing is q itself, one full turn later
    if angle == 0.0:
        angle = 2.0 * math.pi
    return angle / omega


def verify_switch_plane_geometry(mu: float, p, tau2: float, tau3: Optional[float], v: float,
                                 tol: float = 1e-10) -> bool:
    """Check that an off pulse mirrors P to Q and the next on pulse returns Q to P.

    Args:
        mu (float): Multiplier fixing the switching plane phi_y = -mu.
        p: Switching point on the plane.
        tau2 (float): Off-pulse duration.
        tau3 (Optional[float]): Interior on-pulse duration; None uses the
            analytic plane return time.
        v (float): Control amplitude.
        tol (float): Geometric tolerance.

    Returns:
        bool: True if both crossings match and the invariants hold.

    Raises:
        ValueError: If p is off the plane, or tau2 / tau3 do not end on it.
    """
    p = np.asarray(p, dtype=float)
    if abs(p[1] + mu) > tol:
        raise ValueError(f"p_y={p[1]} is not on the plane phi_y = {-mu}")

    start = AdjointGeometry(mu, p)
    after_off = start.evolve_off(tau2)
    if abs(after_off.plane_offset()) > tol:
        raise ValueError(f"tau2={tau2} does not bring p back to the switching plane")

    mirror = np.array([-p[0], p[1], p[2]])
    if np.linalg.norm(after_off.phi - mirror) > tol:
        return False

    if tau3 is None:
        tau3 = plane_return_time(after_off.phi, v)

    after_on = after_off.evolve_on(tau3, v)
    if abs(after_on.plane_offset()) > tol:
        raise ValueError(f"tau3={tau3} does not bring the trajectory back to the switching plane")

    omega = math.sqrt(1.0 + v ** 2)
    axis = np.array([0.0, v, 1.0]) / omega

    conserved = (
        abs(after_on.norm() - start.norm()) < tol
        and abs(np.dot(after_on.phi, axis) - np.dot(after_off.phi, axis)) < tol
    )
    return bool(conserved and np.linalg.norm(after_on.phi - p) < tol)


# =======================
# === ROOT SEARCH     ===
# =======================

def _slaved_durations(tau3, m: int, v: float, delta_theta: float, form: OptimalityForm):
    """(tau1, tau2) tied to tau3 by the area and optimality relations."""
    tau1 = 0.5 * (delta_theta / v - (m - 1) * np.asarray(tau3, dtype=float))
    A, B = optimality_AB(tau1, tau3, v, form)
    return tau1, tau2_from_coefficients(A, B)


def _return_residual(tau3, m: int, v: float, delta_theta: float, form: OptimalityForm):
    """Im a_y along tau3 with tau1 and tau2 slaved to it.

    Args:
        tau3: Interior on-pulse duration(s).
        m (int): Number of off-pulses.
        v (float): Control amplitude.
        delta_theta (float): Angle the passage must sweep.
        form (str): Optimality coefficient form.

    Returns:
        Real value(s); nan where A vanishes and tau2 is undefined.
    """
    tau1, tau2 = _slaved_durations(tau3, m, v, delta_theta, form)
    return np.imag(_ay_any(m, tau1, tau2, tau3, v))


def _bracket_roots(residual: Callable[[float], float], grid: np.ndarray,
                   values: np.ndarray, tol: float) -> List[float]:
    """Bisect every sign change of a sampled residual and keep genuine zeros."""
    roots: List[float] = []

    for i in range(len(grid) - 1):
        left, right = values[i], values[i + 1]
        if not (np.isfinite(left) and np.isfinite(right)):
            continue

        if left == 0.0:
            roots.append(float(grid[i]))
            continue
        # Exact zeros on the grid are picked up as the left end of the next cell
        if right == 0.0 or left * right > 0:
            continue

        try:
            root = bisect(residual, grid[i], grid[i + 1], xtol=tol, maxiter=MAX_BISECTIONS)
        except ValueError:
            # The cell straddles a zero of A, where tau2 is undefined and the residual is nan
            continue

        # Jumps of the tau2 branch flip the sign without a zero
        if abs(residual(root)) < ROOT_ACCEPT:
            roots.append(float(root))

    return roots


def _single_off_candidate(v: float, delta_theta: float, tol: float) -> PulseSequence:
    """m = 1: tau1 from the area, smallest tau2 >= 0 zeroing a_y."""
    omega, _, n_z = _frequencies(v)
    tau1 = delta_theta / (2.0 * v)
    h = 0.5 * omega * tau1

    # On resonance the bare on pulses already return the state
    if abs(np.imag(ay_closed_form(1, tau1, 0.0, 0.0, v))) <= tol:
        tau2 = 0.0
    else:
        tau2 = 2.0 * (math.atan2(math.cos(h), n_z * math.sin(h)) % math.pi)

    return PulseSequence(v=v, m=1, tau1=tau1, tau2=tau2, tau3=0.0)


def _multi_off_candidates(v: float, m: int, delta_theta: float, tol: float,
                          form: OptimalityForm) -> Tuple[List[PulseSequence], bool]:
    """All roots in tau3 at fixed m, plus whether a degenerate branch was hit."""
    upper = delta_theta / ((m - 1) * v)
    grid = np.linspace(SCAN_EPS, upper - SCAN_EPS, SCAN_POINTS)
    values = _return_residual(grid, m, v, delta_theta, form)

    def residual(tau3: float) -> float:
        return float(_return_residual(tau3, m, v, delta_theta, form))

    sequences: List[PulseSequence] = []
    degenerate = False

    for tau3 in _bracket_roots(residual, grid, values, tol):
        try:
            tau1 = tau1_from_area(tau3, m, v, delta_theta)
            tau2 = tau2_from_optimality(tau1, tau3, v, form)
        except (DegenerateBranchError, UnconstrainedBranchError):
            degenerate = True
            continue
        except InvalidSequenceError:
            continue

        sequences.append(PulseSequence(v=v, m=m, tau1=tau1, tau2=tau2, tau3=tau3))

    return sequences, degenerate


def _pick_minimum(sequences: List[PulseSequence]) -> PulseSequence:
    """Smallest T; near ties go to smaller m, then smaller tau3."""
    best_T = min(seq.total_duration for seq in sequences)
    tied = [seq for seq in sequences if seq.total_duration - best_T < TIE_TOL]
    return min(tied, key=lambda seq: (seq.m, seq.tau3))


def evaluate_residuals(seq: PulseSequence, delta_theta: float,
                       form: OptimalityForm = "geometric") -> Residuals:
    """Residuals of the area, optimality and return conditions."""
    a_y = ay_generic(seq)
    optimality = None
    if seq.m > 1:
        optimality = float(optimality_residual(seq.tau1, seq.tau2, seq.tau3, seq.v, form))

    return Residuals(
        area=seq.area_residual(delta_theta),
        optimality=optimality,
        a_y_imag=abs(a_y.imag),
        a_y_real=abs(a_y.real),
    )


def build_result(bc: BoundaryConditions, seq: PulseSequence, form: OptimalityForm = "geometric",
                 candidates: Sequence[PulseSequence] = ()) -> SolverResult:
    """Wrap a sequence with its durations, residuals and algebraic fidelity."""
    final = apply(sequence_propagator(seq), SpinState(1.0 + 0j, 0j, frame="adiabatic"))

    return SolverResult(
        boundary=bc,
        sequence=seq,
        T_rescaled=seq.total_duration,
        T_physical=physical_duration(seq, bc),
        fidelity_error=fidelity_error(final),
        residuals=evaluate_residuals(seq, bc.delta_theta, form),
        optimality_form=form,
        candidates=[
            Candidate(m=c.m, tau1=c.tau1, tau2=c.tau2, tau3=c.tau3, T_rescaled=c.total_duration)
            for c in candidates
        ],
    )


def solve_for_v(bc: BoundaryConditions, v: float, m_max: int = DEFAULT_M_MAX,
                tol: float = DEFAULT_TOL, form: OptimalityForm = "geometric") -> SolverResult:
    """Minimum-time on-off sequence at maximum amplitude v.

    Every m = 1..m_max is searched: m = 1 directly, m > 1 by scanning tau3
    for sign changes of Im a_y with tau1, tau2 slaved to it, then bisecting.

    Args:
        bc (BoundaryConditions): Boundary conditions.
        v (float): Maximum control amplitude.
        m_max (int): Largest number of off-pulses tried.
        tol (float): Bisection tolerance on tau3.
        form (str): Optimality coefficient form.

    Returns:
        SolverResult: The optimal sequence with every candidate found.

    Raises:
        NoSolutionError: If no m <= m_max yields a root.
        DegenerateBranchError: If the only roots sit on the A = 0 branch.
        NumericalFailureError: If the root search breaks down or the optimum
            beats the T >= pi bound.
        ValueError: If v <= 0 or m_max < 1.
    """
    if not v > 0:
        raise ValueError(f"amplitude must be positive, got v={v}")
    if m_max < 1:
        raise ValueError(f"m_max must be >= 1, got {m_max}")

    delta_theta = bc.delta_theta

    # Inputs are checked above; anything raised from here on is a numerical breakdown
    try:
        sequences = [_single_off_candidate(v, delta_theta, tol)]
        degenerate = False

        for m in range(2, m_max + 1):
            found, hit = _multi_off_candidates(v, m, delta_theta, tol, form)
            sequences.extend(found)
            degenerate = degenerate or hit
    except (ValueError, ArithmeticError, RuntimeError) as e:
        raise NumericalFailureError(f"root search failed at v={v}: {e}") from e

    # The m = 1 candidate always exists unless its return condition fails numerically
    sequences = [
        seq for seq in sequences
        if abs(np.imag(_ay_any(seq.m, seq.tau1, seq.tau2, seq.tau3, seq.v))) < ROOT_ACCEPT
    ]

    if not sequences:
        if degenerate:
            raise DegenerateBranchError(f"every root at v={v} lies on the degenerate branch")
        raise NoSolutionError(f"no sequence with m <= {m_max} returns the state at v={v}")

    best = _pick_minimum(sequences)
    if best.total_duration < math.pi - 1e-9:
        raise NumericalFailureError(f"T={best.total_duration} violates the lower bound pi at v={v}")

    return build_result(bc, best, form, sequences)


# ========================
# === SWEEPS           ===
# ========================

def _staircase_row(bc: BoundaryConditions, v: float, m_max: int, tol: float,
                   form: OptimalityForm) -> dict:
    """One staircase row; solver errors become the status instead of propagating."""
    try:
        result = solve_for_v(bc, v, m_max, tol, form)
    except NoSolutionError:
        status = "no-solution"
    except DegenerateBranchError:
        status = "degenerate-branch"
    except (ApforgeError, RuntimeError) as e:
        status = f"numerical-failure: {e}"
    else:
        return {
            "v": v,
            "m": result.sequence.m,
            "T_rescaled": result.T_rescaled,
            "T_physical": result.T_physical,
            "status": "ok",
        }

    return {"v": v, "m": None, "T_rescaled": math.nan, "T_physical": math.nan, "status": status}


def staircase_sweep(bc: BoundaryConditions, v_grid: Sequence[float], m_max: int = DEFAULT_M_MAX,
                    tol: float = DEFAULT_TOL, form: OptimalityForm = "geometric",
                    n_jobs: Optional[int] = None, progress: bool = False) -> pd.DataFrame:
    """Optimal duration against amplitude, one row per grid point.

    Args:
        bc (BoundaryConditions): Boundary conditions.
        v_grid (Sequence[float]): Strictly increasing positive amplitudes.
        m_max (int): Largest number of off-pulses tried.
        tol (float): Bisection tolerance.
        form (str): Optimality coefficient form.
        n_jobs (Optional[int]): Worker count, defaults to APFORGE_THREADS.
        progress (bool): Show a tqdm bar on stderr.

    Returns:
        pd.DataFrame: Columns v, m, T_rescaled, T_physical, status in grid order.
    """
    grid = np.asarray(v_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("v grid must be non-empty, positive and strictly increasing")

    jobs = n_jobs if n_jobs is not None else get_thread_count()
    points = tqdm(grid, desc="Staircase", unit="v", disable=not progress)

    # Parallel returns results in submission order
    rows = Parallel(n_jobs=jobs)(
        delayed(_staircase_row)(bc, float(v), m_max, tol, form) for v in points
    )

    df = pd.DataFrame(rows, columns=["v", "m", "T_rescaled", "T_physical", "status"])
    df["m"] = df["m"].astype("Int64")
    return df


def _scan_start(v: float) -> float:
    """Smallest tau3 with 1 - cos(omega tau3) = SCAN_A_MIN.

    Below it A rounds to zero and tau2 is undefined.
    """
    omega = math.sqrt(1.0 + v ** 2)

    # 1 - cos(x) = 2 sin^2(x / 2) keeps the inversion accurate for tiny x
    return 2.0 * math.asin(math.sqrt(0.5 * SCAN_A_MIN)) / omega


def resonance_scan(bc: BoundaryConditions, v: float, m: int, points: int = MIN_SAMPLES,
                   tau3_grid: Optional[Sequence[float]] = None,
                   form: OptimalityForm = "geometric") -> pd.DataFrame:
    """Return-condition error along tau3 at fixed (v, m), tau1 and tau2 slaved.

    Args:
        bc (BoundaryConditions): Boundary conditions.
        v (float): Control amplitude.
        m (int): Number of off-pulses, at least 2.
        points (int): Grid size when tau3_grid is not given.
        tau3_grid (Optional[Sequence[float]]): Explicit interior durations.
        form (str): Optimality coefficient form.

    Returns:
        pd.DataFrame: Columns tau3, tau1, tau2, a_y_imag, log_error.
    """
    if m < 2:
        raise ValueError("a tau3 scan needs at least two off-pulses")
    if not v > 0:
        raise ValueError(f"amplitude must be positive, got v={v}")

    upper = bc.delta_theta / ((m - 1) * v)
    if tau3_grid is None:
        tau3 = np.linspace(_scan_start(v), upper - SCAN_EPS, points)
    else:
        tau3 = np.asarray(tau3_grid, dtype=float)
        if np.any(tau3 <= 0) or np.any(tau3 >= upper):
            raise ValueError(f"tau3 values must lie inside (0, {upper})")

    tau1, tau2 = _slaved_durations(tau3, m, v, bc.delta_theta, form)
    propagator = compose_sequence(tau1, tau2, tau3, v, m)
    error = np.abs(propagator.ax) ** 2 + np.abs(propagator.ay) ** 2

    return pd.DataFrame({
        "tau3": tau3,
        "tau1": tau1,
        "tau2": tau2,
        "a_y_imag": np.imag(propagator.ay),
        "log_error": np.maximum(np.log10(np.maximum(error, 1e-300)), FIDELITY_FLOOR),
    })
