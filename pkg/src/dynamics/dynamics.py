import math
import numpy as np
import pandas as pd
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Union
from scipy.integrate import solve_ivp

from src.config.config import ANGLE_EDGE, FIDELITY_FLOOR, MIN_SAMPLES, ODE_ATOL, ODE_RTOL
from src.config.errors import InvalidSequenceError, NumericalFailureError
from src.algebra.su2core import (
    Frame,
    SpinState,
    Su2Operator,
    apply,
    off_propagator,
    on_propagator,
)
from src.protocols.protocols import BoundaryConditions, detuning_from_angle, energy_gap
from src.solver.sequence import PulseSequence

TRAJECTORY_COLUMNS = ["t", "tau", "theta", "delta", "re_c1", "im_c1", "re_c2", "im_c2", "sx", "sy", "sz", "gap"]
WAVEFORM_COLUMNS = ["t", "tau", "u", "theta", "delta"]

# ===========================
# === CONTROL WAVEFORM    ===
# ===========================

@dataclass(frozen=True)
class WaveformSegment:
    """One constant-control piece, in both rescaled and physical time."""

    kind: str
    u: float
    tau_start: float
    tau_duration: float
    t_start: float
    t_duration: float
    theta_start: float
    theta_end: float

    @property
    def tau_end(self) -> float:
        return self.tau_start + self.tau_duration

    @property
    def t_end(self) -> float:
        return self.t_start + self.t_duration

    def _is_sweeping(self) -> bool:
        return self.kind == "on" and self.u > 0

    def theta_of_tau(self, tau):
        return self.theta_start - self.u * (np.asarray(tau, dtype=float) - self.tau_start)

    def theta_of_t(self, t, omega_rabi: float):
        t = np.asarray(t, dtype=float)
        if not self._is_sweeping():
            return np.full(t.shape, self.theta_start)
        argument = math.cos(self.theta_start) + self.u * omega_rabi * (t - self.t_start)
        return np.arccos(np.clip(argument, -1.0, 1.0))

    def tau_of_t(self, t, omega_rabi: float):
        t = np.asarray(t, dtype=float)
        if not self._is_sweeping():
            return self.tau_start + omega_rabi * (t - self.t_start) / math.sin(self.theta_start)
        return self.tau_start + (self.theta_start - self.theta_of_t(t, omega_rabi)) / self.u


@dataclass(frozen=True)
class ControlWaveform:
    """Piecewise control u(tau) with its exact map to physical time."""

    segments: List[WaveformSegment]
    omega_rabi: float

    @property
    def total_rescaled(self) -> float:
        return self.segments[-1].tau_end if self.segments else 0.0

    @property
    def total_physical(self) -> float:
        return self.segments[-1].t_end if self.segments else 0.0

    @property
    def theta_final(self) -> float:
        return self.segments[-1].theta_end

    def boundaries_t(self) -> np.ndarray:
        return np.array([0.0] + [seg.t_end for seg in self.segments])

    def _segment_index(self, values, starts: np.ndarray) -> np.ndarray:
        """Segment owning each value; a value on a boundary belongs to the later segment."""
        index = np.searchsorted(starts, np.asarray(values, dtype=float), side="right") - 1
        return np.clip(index, 0, len(self.segments) - 1)

    def _evaluate(self, values, starts: np.ndarray, method: Callable) -> np.ndarray:
        """
        Evaluate a per-segment function over a mixed array of times.

        Args:
            values: Scalar or array of times, rescaled or physical to match starts.
            starts: Start time of every segment on the same clock as values.
            method: Called as method(segment, values_in_segment).

        Returns:
            np.ndarray: At least 1-d, same shape as the input values.
        """
        values = np.atleast_1d(np.asarray(values, dtype=float))
        index = self._segment_index(values, starts)
        out = np.empty(values.shape)
        for i, seg in enumerate(self.segments):
            mask = index == i
            if np.any(mask):
                out[mask] = method(seg, values[mask])
        return out

    def theta_of_tau(self, tau) -> np.ndarray:
        starts = np.array([seg.tau_start for seg in self.segments])
        return self._evaluate(tau, starts, lambda seg, x: seg.theta_of_tau(x))

    def theta_of_t(self, t) -> np.ndarray:
        starts = np.array([seg.t_start for seg in self.segments])
        return self._evaluate(t, starts, lambda seg, x: seg.theta_of_t(x, self.omega_rabi))

    def tau_of_t(self, t) -> np.ndarray:
        starts = np.array([seg.t_start for seg in self.segments])
        return self._evaluate(t, starts, lambda seg, x: seg.tau_of_t(x, self.omega_rabi))

    def u_of_tau(self, tau) -> np.ndarray:
        starts = np.array([seg.tau_start for seg in self.segments])
        return self._evaluate(tau, starts, lambda seg, x: np.full(x.shape, seg.u if seg.kind == "on" else 0.0))

    def delta_of_t(self, t) -> np.ndarray:
        return detuning_from_angle(self.theta_of_t(t), self.omega_rabi)

    def table(self, samples: Optional[np.ndarray] = None) -> pd.DataFrame:
        """Sampled waveform with columns t, tau, u, theta, delta."""
        t = sample_times(self) if samples is None else np.asarray(samples, dtype=float)
        tau = self.tau_of_t(t)

        return pd.DataFrame({
            "t": t,
            "tau": tau,
            "u": self.u_of_tau(tau),
            "theta": self.theta_of_t(t),
            "delta": self.delta_of_t(t),
        })[WAVEFORM_COLUMNS]


def build_waveform(seq: PulseSequence, bc: BoundaryConditions) -> ControlWaveform:
    """Map a rescaled-time sequence to physical time.

    On pulses sweep theta linearly in tau and last (cos theta_b - cos theta_a) / (v Omega)
    in physical time; off pulses freeze theta and last sin(theta) tau2 / Omega.

    Args:
        seq (PulseSequence): Sequence in rescaled time.
        bc (BoundaryConditions): Starting angle and Rabi frequency.

    Returns:
        ControlWaveform: Segments in sequence order.

    Raises:
        InvalidSequenceError: If the field angle leaves (0, pi).
    """
    omega_rabi = bc.omega_rabi
    segments: List[WaveformSegment] = []
    theta, tau, t = bc.theta_i, 0.0, 0.0

    for kind, duration in seq.segments():
        sweeping = kind == "on" and seq.v > 0
        theta_end = theta - seq.v * duration if sweeping else theta

        if theta_end < ANGLE_EDGE or theta_end > math.pi - ANGLE_EDGE:
            raise InvalidSequenceError(f"field angle leaves (0, pi) at tau={tau + duration}: theta={theta_end}")

        if sweeping:
            t_duration = (math.cos(theta_end) - math.cos(theta)) / (seq.v * omega_rabi)
        else:
            t_duration = math.sin(theta) * duration / omega_rabi

        u = seq.v if kind == "on" else 0.0
        segments.append(WaveformSegment(kind, u, tau, duration, t, t_duration, theta, theta_end))
        theta, tau, t = theta_end, tau + duration, t + t_duration

    return ControlWaveform(segments=segments, omega_rabi=omega_rabi)


def physical_duration(seq: PulseSequence, bc: BoundaryConditions) -> float:
    """Total duration of the sequence in units of 1/Omega."""
    return build_waveform(seq, bc).total_physical


def sample_times(wf: ControlWaveform, points: int = MIN_SAMPLES) -> np.ndarray:
    """Uniform physical-time grid merged with every segment boundary."""
    total = wf.total_physical
    if total == 0.0:
        return np.array([0.0, 0.0])
    return np.union1d(np.linspace(0.0, total, points), wf.boundaries_t())


# =====================
# === TRAJECTORIES  ===
# =====================

@dataclass(frozen=True)
class Trajectory:
    """Time-sampled state in one frame, columns as in TRAJECTORY_COLUMNS."""

    frame: Frame
    data: pd.DataFrame

    def final_state(self) -> SpinState:
        """Amplitudes at the last sample, tagged with this trajectory's frame."""
        last = self.data.iloc[-1]
        return SpinState(
            c1=complex(last["re_c1"], last["im_c1"]),
            c2=complex(last["re_c2"], last["im_c2"]),
            frame=self.frame,
        )

    def states(self) -> np.ndarray:
        """Amplitudes as an (n, 2) complex array."""
        d = self.data
        return np.stack([d["re_c1"] + 1j * d["im_c1"], d["re_c2"] + 1j * d["im_c2"]], axis=-1)

    def norm_drift(self) -> float:
        """Largest deviation of the state norm from one over all samples."""
        return float(np.max(np.abs(np.linalg.norm(self.states(), axis=1) - 1.0)))

    def to_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.data.to_csv(path, index=False)


def _trajectory(frame: Frame, t, tau, theta, states: np.ndarray, omega_rabi: float) -> Trajectory:
    c1, c2 = states[:, 0], states[:, 1]
    overlap = np.conj(c1) * c2

    data = pd.DataFrame({
        "t": t,
        "tau": tau,
        "theta": theta,
        "delta": detuning_from_angle(theta, omega_rabi),
        "re_c1": c1.real,
        "im_c1": c1.imag,
        "re_c2": c2.real,
        "im_c2": c2.imag,
        "sx": 2.0 * overlap.real,
        "sy": 2.0 * overlap.imag,
        "sz": np.abs(c1) ** 2 - np.abs(c2) ** 2,
        "gap": energy_gap(theta, omega_rabi),
    })
    return Trajectory(frame=frame, data=data[TRAJECTORY_COLUMNS])


def _schrodinger_original(t, a, segment: WaveformSegment, omega_rabi: float):
    """Right-hand side da/dt for solve_ivp within one segment."""
    # H = (Delta sigma_z + Omega sigma_x) / 2
    delta = float(detuning_from_angle(segment.theta_of_t(t, omega_rabi), omega_rabi))
    return -0.5j * np.array([delta * a[0] + omega_rabi * a[1], omega_rabi * a[0] - delta * a[1]])


def integrate_original(wf: ControlWaveform, bc: BoundaryConditions, a0: SpinState,
                       samples: Optional[np.ndarray] = None) -> Trajectory:
    """Integrate i da/dt = H(t) a segment by segment in physical time.

    Args:
        wf (ControlWaveform): Detuning waveform.
        bc (BoundaryConditions): Rabi frequency.
        a0 (SpinState): Initial amplitudes in the original frame.
        samples (Optional[np.ndarray]): Output times, defaults to sample_times(wf).

    Returns:
        Trajectory: Original-frame samples.

    Raises:
        NumericalFailureError: If the integrator stops early.
    """
    t_out = sample_times(wf) if samples is None else np.sort(np.asarray(samples, dtype=float))
    states = np.empty((len(t_out), 2), dtype=complex)
    filled = np.zeros(len(t_out), dtype=bool)

    current = a0.as_array()
    start = t_out <= 0.0
    states[start] = current
    filled |= start

    for segment in wf.segments:
        if segment.t_duration <= 0.0:
            continue

        mask = ~filled & (t_out >= segment.t_start) & (t_out <= segment.t_end)
        t_eval = np.union1d(t_out[mask], [segment.t_end])

        sol = solve_ivp(
            _schrodinger_original,
            (segment.t_start, segment.t_end),
            current,
            method="DOP853",
            t_eval=t_eval,
            args=(segment, bc.omega_rabi),
            rtol=ODE_RTOL,
            atol=ODE_ATOL,
        )
        if not sol.success:
            stop = float(sol.t[-1]) if sol.t.size else segment.t_start
            raise NumericalFailureError(f"original-frame integration failed: {sol.message}", time_stamp=stop)

        states[mask] = sol.y[:, np.searchsorted(t_eval, t_out[mask])].T
        filled |= mask
        current = sol.y[:, -1]

    # Times past the last segment keep the final state
    states[~filled] = current

    return _trajectory("original", t_out, wf.tau_of_t(t_out), wf.theta_of_t(t_out), states, bc.omega_rabi)


def _apply_batch(op: Su2Operator, state: np.ndarray) -> np.ndarray:
    """Apply an operator with scalar or array coefficients to one state; returns (n, 2) or (2,)."""
    aI, ax, ay, az = (np.asarray(c) for c in op.coefficients())
    c1, c2 = state
    return np.stack([(aI + az) * c1 + (ax - 1j * ay) * c2, (ax + 1j * ay) * c1 + (aI - az) * c2], axis=-1)


def _propagate_waveform(wf: ControlWaveform, b0: SpinState, samples: Optional[np.ndarray]) -> Trajectory:
    """
    Evolve a piecewise-constant waveform with closed-form segment propagators.

    Args:
        wf: Waveform whose segments are applied in order.
        b0: Adiabatic-frame state at tau = 0.
        samples: Physical times to report. Defaults to sample_times(wf).

    Returns:
        Trajectory: Adiabatic-frame samples. Times past the end hold the final state.
    """
    t_out = sample_times(wf) if samples is None else np.sort(np.asarray(samples, dtype=float))
    tau_out = wf.tau_of_t(t_out)
    states = np.tile(b0.as_array(), (len(t_out), 1))

    current = b0.as_array()
    filled = np.zeros(len(t_out), dtype=bool)

    for segment in wf.segments:
        mask = ~filled & (tau_out >= segment.tau_start) & (tau_out <= segment.tau_end)
        elapsed = tau_out[mask] - segment.tau_start

        if segment.kind == "on":
            states[mask] = _apply_batch(on_propagator(elapsed, segment.u), current)
            step = on_propagator(segment.tau_duration, segment.u)
        else:
            states[mask] = _apply_batch(off_propagator(elapsed), current)
            step = off_propagator(segment.tau_duration)

        filled |= mask
        current = _apply_batch(step, current)

    states[~filled] = current
    return _trajectory("adiabatic", t_out, tau_out, wf.theta_of_t(t_out), states, wf.omega_rabi)


def _integrate_profile(profile: Callable[[float], float], b0: SpinState, bc: BoundaryConditions,
                       duration: float, points: int) -> Trajectory:
    """Integrate a continuous control u(tau) with DOP853 over [0, duration]."""
    # State: Re/Im of b1, b2, then theta and t, all against tau
    def rhs(tau, y):
        u = profile(tau)
        b1, b2 = y[0] + 1j * y[1], y[2] + 1j * y[3]
        # i b' = (sigma_z - u sigma_y) b / 2
        d1 = -0.5j * (b1 + 1j * u * b2)
        d2 = -0.5j * (-b2 - 1j * u * b1)
        return [d1.real, d1.imag, d2.real, d2.imag, -u, math.sin(y[4]) / bc.omega_rabi]

    tau_out = np.linspace(0.0, duration, points)
    y0 = [b0.c1.real, b0.c1.imag, b0.c2.real, b0.c2.imag, bc.theta_i, 0.0]

    sol = solve_ivp(rhs, (0.0, duration), y0, method="DOP853", t_eval=tau_out, rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        stop = float(sol.t[-1]) if sol.t.size else 0.0
        raise NumericalFailureError(f"adiabatic-frame integration failed: {sol.message}", time_stamp=stop)

    theta = sol.y[4]
    if np.any(theta <= 0.0) or np.any(theta >= math.pi):
        raise InvalidSequenceError("field angle leaves (0, pi) under the given profile")

    states = np.stack([sol.y[0] + 1j * sol.y[1], sol.y[2] + 1j * sol.y[3]], axis=-1)
    return _trajectory("adiabatic", sol.y[5], sol.t, theta, states, bc.omega_rabi)


def integrate_adiabatic(control: Union[ControlWaveform, Callable[[float], float]], b0: SpinState,
                        bc: Optional[BoundaryConditions] = None, duration: Optional[float] = None,
                        samples: Optional[np.ndarray] = None, points: int = MIN_SAMPLES) -> Trajectory:
    """Evolve adiabatic-frame amplitudes in rescaled time.

    A ControlWaveform is propagated exactly with the on/off propagators,
    sampled at the same physical times as integrate_original. A callable
    u(tau) is integrated with DOP853 together with theta and t.

    Args:
        control: Piecewise waveform or a profile u(tau).
        b0 (SpinState): Initial adiabatic-frame amplitudes.
        bc (Optional[BoundaryConditions]): Required for a profile.
        duration (Optional[float]): Rescaled duration, required for a profile.
        samples (Optional[np.ndarray]): Physical output times for a waveform.
        points (int): Uniform tau samples for a profile.

    Returns:
        Trajectory: Adiabatic-frame samples.

    Raises:
        InvalidSequenceError: If a profile drives the field angle out of (0, pi).
        NumericalFailureError: If the integrator stops early.
    """
    if isinstance(control, ControlWaveform):
        return _propagate_waveform(control, b0, samples)

    if bc is None or duration is None:
        raise ValueError("a control profile needs boundary conditions and a duration")
    return _integrate_profile(control, b0, bc, duration, points)


# ======================
# === FRAMES         ===
# ======================

def frame_transform(state: SpinState, theta: float) -> SpinState:
    """Apply the symmetric rotation (cos, sin; sin, -cos)(theta/2), its own inverse."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    target: Frame = "adiabatic" if state.frame == "original" else "original"

    return SpinState(
        c1=c * state.c1 + s * state.c2,
        c2=s * state.c1 - c * state.c2,
        frame=target,
    )


def to_adiabatic_frame(trajectory: Trajectory, omega_rabi: float) -> Trajectory:
    """Transform every sample of an original-frame trajectory with its own theta."""
    if trajectory.frame != "original":
        raise ValueError("trajectory is already in the adiabatic frame")

    d = trajectory.data
    a = trajectory.states()
    theta = d["theta"].to_numpy()
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    b = np.stack([c * a[:, 0] + s * a[:, 1], s * a[:, 0] - c * a[:, 1]], axis=-1)

    return _trajectory("adiabatic", d["t"].to_numpy(), d["tau"].to_numpy(), theta, b, omega_rabi)


def fidelity_error(b_final: SpinState) -> float:
    """log10 |b2|^2, floored so a perfect transfer stays finite."""
    population = abs(b_final.c2) ** 2
    if population <= 10.0 ** FIDELITY_FLOOR:
        return FIDELITY_FLOOR
    return float(math.log10(population))


# =================================
# === INSTANTANEOUS JUMP BOUND  ===
# =================================

@dataclass(frozen=True)
class JumpBoundResult:
    T_rescaled: float
    T_physical: float
    b_final: SpinState
    fidelity_error: float


def jump_bound_protocol(bc: BoundaryConditions) -> JumpBoundResult:
    """Reference passage: jump to the mid angle, wait, jump to the final angle.

    Jumps leave the original-frame state untouched, so in the adiabatic frame
    they act as back-to-back frame transforms. The wait at the mid angle lasts
    pi in rescaled time.
    """
    theta_bar = bc.theta_bar
    b = SpinState(1.0 + 0j, 0j, frame="adiabatic")

    b = frame_transform(frame_transform(b, bc.theta_i), theta_bar)
    b = apply(off_propagator(math.pi), b)
    b = frame_transform(frame_transform(b, theta_bar), bc.theta_f)

    return JumpBoundResult(
        T_rescaled=math.pi,
        T_physical=math.sin(theta_bar) * math.pi / bc.omega_rabi,
        b_final=b,
        fidelity_error=fidelity_error(b),
    )
