import math
import numpy as np
import pytest
from types import SimpleNamespace

import src.dynamics.dynamics as dynamics
from src.config.errors import InvalidSequenceError, NumericalFailureError
from src.algebra.su2core import SpinState, sequence_propagator
from src.protocols.protocols import BoundaryConditions, compute_bounds, eigenstates, rc_resonances, rc_theta_profile
from src.solver.sequence import PulseSequence
from src.dynamics.dynamics import (
    TRAJECTORY_COLUMNS,
    WAVEFORM_COLUMNS,
    build_waveform,
    fidelity_error,
    frame_transform,
    integrate_adiabatic,
    integrate_original,
    jump_bound_protocol,
    physical_duration,
    sample_times,
    to_adiabatic_frame,
)

NORTH = SpinState(1.0 + 0j, 0j)


@pytest.fixture(scope="module")
def first_resonance(sweep_bc):
    return rc_resonances(sweep_bc, 1)[0]


@pytest.fixture(scope="module")
def original_035(sweep_bc, solved_035):
    wf = build_waveform(solved_035.sequence, sweep_bc)
    return wf, integrate_original(wf, sweep_bc, eigenstates(sweep_bc.theta_i)[0])


# === Waveform ===

def test_waveform_follows_the_sequence(sweep_bc, solved_035):
    seq = solved_035.sequence
    wf = build_waveform(seq, sweep_bc)

    assert [s.kind for s in wf.segments] == [kind for kind, _ in seq.segments()]
    on_time = sum(s.tau_duration for s in wf.segments if s.kind == "on")
    assert on_time == pytest.approx(seq.on_duration, abs=1e-12)

    assert wf.total_rescaled == pytest.approx(seq.total_duration, abs=1e-12)
    assert wf.theta_final == pytest.approx(sweep_bc.theta_f, abs=1e-12)
    assert wf.total_physical < wf.total_rescaled
    assert physical_duration(seq, sweep_bc) == wf.total_physical


def test_off_pulse_lasts_its_rescaled_time_at_right_angle():
    bc = BoundaryConditions(theta_i=math.pi / 2, theta_f=0.5)
    wf = build_waveform(PulseSequence(v=0.0, m=1, tau1=0.0, tau2=math.pi), bc)
    assert wf.total_physical == pytest.approx(math.pi, abs=1e-15)


def test_waveform_rejects_angles_past_the_pole(quarter_bc):
    seq = PulseSequence(v=1.0, m=1, tau1=2.0, tau2=0.5)
    with pytest.raises(InvalidSequenceError):
        build_waveform(seq, quarter_bc)


def test_waveform_table_is_monotone(sweep_bc, solved_035):
    table = build_waveform(solved_035.sequence, sweep_bc).table()

    assert list(table.columns) == WAVEFORM_COLUMNS
    assert (np.diff(table["t"]) >= 0).all()
    assert (np.diff(table["theta"]) <= 1e-12).all()
    assert (np.diff(table["delta"]) >= -1e-9).all()
    assert set(np.unique(table["u"])) <= {0.0, 0.35}


def test_constant_control_reproduces_the_roland_cerf_sweep(sweep_bc, first_resonance):
    seq = PulseSequence.constant(first_resonance.u_k, first_resonance.T_k)
    wf = build_waveform(seq, sweep_bc)

    assert wf.total_physical == pytest.approx(first_resonance.T_tilde_k, rel=1e-12)

    t = np.linspace(0.0, wf.total_physical, 50)
    expected = rc_theta_profile(t, first_resonance.u_k, sweep_bc)
    assert np.allclose(wf.theta_of_t(t), expected, atol=1e-12)


def test_sample_times_include_every_boundary(sweep_bc, solved_035):
    wf = build_waveform(solved_035.sequence, sweep_bc)
    t = sample_times(wf)

    assert len(t) >= 400
    assert np.all(np.isin(wf.boundaries_t(), t))
    assert t[0] == 0.0 and t[-1] == pytest.approx(wf.total_physical, abs=0)


# === Original frame ===

def test_resonant_rabi_flop():
    bc = BoundaryConditions(theta_i=math.pi / 2, theta_f=0.5)
    wf = build_waveform(PulseSequence(v=0.0, m=1, tau1=0.0, tau2=math.pi), bc)
    final = integrate_original(wf, bc, SpinState(1.0 + 0j, 0j, frame="original")).final_state()

    assert final.c1 == pytest.approx(0.0, abs=1e-8)
    assert final.c2 == pytest.approx(-1j, abs=1e-8)


def test_original_frame_keeps_the_norm(original_035):
    _, trajectory = original_035
    assert trajectory.norm_drift() < 1e-8


def test_optimal_sequence_ends_in_the_final_eigenstate(sweep_bc, original_035):
    _, trajectory = original_035
    b = frame_transform(trajectory.final_state(), sweep_bc.theta_f)

    assert b.frame == "adiabatic"
    assert fidelity_error(b) < -9


def test_trajectory_columns_and_samples(original_035):
    wf, trajectory = original_035
    data = trajectory.data

    assert list(data.columns) == TRAJECTORY_COLUMNS
    assert (np.diff(data["tau"]) >= -1e-12).all()
    assert np.allclose(data["gap"], 1.0 / np.sin(data["theta"]), rtol=1e-12)
    assert data["t"].iloc[-1] == pytest.approx(wf.total_physical, abs=0)


def test_trajectory_csv_header(tmp_path, original_035):
    _, trajectory = original_035
    path = tmp_path / "nested" / "trajectory.csv"
    trajectory.to_csv(path)

    assert path.read_text().splitlines()[0] == ",".join(TRAJECTORY_COLUMNS)


def test_integration_failure_carries_the_stop_time(monkeypatch, sweep_bc, solved_035):
    wf = build_waveform(solved_035.sequence, sweep_bc)
    stopped = SimpleNamespace(success=False, t=np.array([0.0, 0.7]), message="step size too small")
    monkeypatch.setattr(dynamics, "solve_ivp", lambda *args, **kwargs: stopped)

    with pytest.raises(NumericalFailureError) as info:
        integrate_original(wf, sweep_bc, eigenstates(sweep_bc.theta_i)[0])
    assert info.value.time_stamp == 0.7


def test_zero_length_sequence_gives_two_samples(sweep_bc):
    wf = build_waveform(PulseSequence(v=0.35, m=1, tau1=0.0, tau2=0.0), sweep_bc)
    a0 = eigenstates(sweep_bc.theta_i)[0]
    trajectory = integrate_original(wf, sweep_bc, a0)

    assert len(trajectory.data) == 2
    assert trajectory.final_state().c1 == pytest.approx(a0.c1, abs=0)


# === Adiabatic frame ===

def test_frames_agree(sweep_bc, original_035):
    wf, trajectory = original_035
    transformed = to_adiabatic_frame(trajectory, sweep_bc.omega_rabi)
    propagated = integrate_adiabatic(wf, NORTH)

    assert transformed.frame == propagated.frame == "adiabatic"
    assert np.allclose(transformed.data["t"], propagated.data["t"], atol=0)
    assert np.allclose(transformed.states(), propagated.states(), atol=1e-7)


def test_to_adiabatic_frame_needs_original_samples(sweep_bc, solved_035):
    propagated = integrate_adiabatic(build_waveform(solved_035.sequence, sweep_bc), NORTH)
    with pytest.raises(ValueError):
        to_adiabatic_frame(propagated, sweep_bc.omega_rabi)


def test_optimal_sequence_returns_to_the_north_pole(sweep_bc, solved_035):
    trajectory = integrate_adiabatic(build_waveform(solved_035.sequence, sweep_bc), NORTH)
    assert trajectory.data["sz"].iloc[-1] > 1 - 1e-12


def test_exact_roland_cerf_propagation(sweep_bc, first_resonance):
    seq = PulseSequence.constant(first_resonance.u_k, first_resonance.T_k)
    trajectory = integrate_adiabatic(build_waveform(seq, sweep_bc), NORTH)

    assert trajectory.data["sz"].iloc[-1] > 1 - 1e-10
    assert trajectory.data["sz"].min() < 0.99


def test_constant_profile_integration(sweep_bc, first_resonance):
    trajectory = integrate_adiabatic(
        lambda tau: first_resonance.u_k, NORTH, bc=sweep_bc, duration=first_resonance.T_k
    )

    assert fidelity_error(trajectory.final_state()) < -8
    assert trajectory.data["theta"].iloc[-1] == pytest.approx(sweep_bc.theta_f, abs=1e-8)
    assert trajectory.data["t"].iloc[-1] == pytest.approx(first_resonance.T_tilde_k, rel=1e-8)


def test_free_precession_profile(quarter_bc):
    trajectory = integrate_adiabatic(lambda tau: 0.0, NORTH, bc=quarter_bc, duration=2.0, points=11)
    data = trajectory.data

    assert np.allclose(data["theta"], quarter_bc.theta_i, atol=1e-12)
    assert np.allclose(data["t"], math.sin(quarter_bc.theta_i) * data["tau"], atol=1e-10)
    assert trajectory.final_state().c1 == pytest.approx(np.exp(-1j), abs=1e-9)
    assert abs(trajectory.final_state().c2) < 1e-12


def test_profile_needs_boundary_and_duration():
    with pytest.raises(ValueError):
        integrate_adiabatic(lambda tau: 0.3, NORTH)


def test_profile_rejects_angles_past_the_pole(quarter_bc):
    with pytest.raises(InvalidSequenceError):
        integrate_adiabatic(lambda tau: 1.0, NORTH, bc=quarter_bc, duration=3.0)


def test_fidelity_tracks_the_return_residual(sweep_bc, solved_035):
    seq = solved_035.sequence
    detuned = PulseSequence(v=seq.v, m=seq.m, tau1=seq.tau1, tau2=seq.tau2, tau3=seq.tau3 + 1e-2)
    bc = BoundaryConditions(theta_i=sweep_bc.theta_i, theta_f=sweep_bc.theta_i - detuned.area)

    trajectory = integrate_original(build_waveform(detuned, bc), bc, eigenstates(bc.theta_i)[0])
    b = frame_transform(trajectory.final_state(), bc.theta_f)
    propagator = sequence_propagator(detuned)
    expected = abs(propagator.ax) ** 2 + abs(propagator.ay) ** 2

    assert abs(b.c2) ** 2 == pytest.approx(expected, abs=1e-9)


# === Frame helpers ===

def test_eigenstate_maps_to_the_north_pole(rng):
    for theta in rng.uniform(0.05, math.pi - 0.05, 10):
        upper, lower = eigenstates(theta)

        b = frame_transform(upper, theta)
        assert b.frame == "adiabatic"
        assert b.c1 == pytest.approx(1.0, abs=1e-15)
        assert b.c2 == pytest.approx(0.0, abs=1e-15)

        b = frame_transform(lower, theta)
        assert abs(b.c2) == pytest.approx(1.0, abs=1e-15)


def test_frame_transform_is_an_involution(rng):
    theta = 1.1
    state = SpinState(complex(*rng.normal(size=2)), complex(*rng.normal(size=2)), frame="original")
    back = frame_transform(frame_transform(state, theta), theta)

    assert back.frame == "original"
    assert back.c1 == pytest.approx(state.c1, abs=1e-15)
    assert back.c2 == pytest.approx(state.c2, abs=1e-15)


@pytest.mark.parametrize(
    "c2,expected",
    [(0j, -16.0), (1e-9 + 0j, -16.0), (0.1 + 0j, -2.0), (0.1j, -2.0)],
)
def test_fidelity_error(c2, expected):
    state = SpinState(complex(math.sqrt(1 - abs(c2) ** 2)), c2)
    assert fidelity_error(state) == pytest.approx(expected, abs=1e-12)


# === Jump bound ===

def test_jump_bound_protocol(sweep_bc, quarter_bc):
    for bc in (sweep_bc, quarter_bc):
        result = jump_bound_protocol(bc)
        bounds = compute_bounds(bc)

        assert result.T_rescaled == math.pi
        assert result.T_physical == pytest.approx(bounds.T0_physical, abs=1e-15)
        assert result.fidelity_error < -12
