"""End-to-end reproduction checks on the symmetric -10 Omega to +10 Omega sweep."""

import math
import numpy as np
import pytest

from src.algebra.su2core import SpinState, sequence_propagator
from src.protocols.protocols import compute_bounds, eigenstates, rc_resonances
from src.solver.sequence import PulseSequence
from src.solver.solver import (
    AdjointGeometry,
    ay_closed_form,
    ay_generic,
    coplanarity_determinant,
    first_return_angle,
    optimality_residual,
    plane_return_time,
    resonance_scan,
    solve_for_v,
    staircase_sweep,
    tau2_from_optimality,
)
from src.dynamics.dynamics import (
    build_waveform,
    frame_transform,
    integrate_adiabatic,
    integrate_original,
    to_adiabatic_frame,
)
from src.cli.cli import integrated_fidelity

NORTH = SpinState(1.0 + 0j, 0j)


@pytest.fixture(scope="module")
def staircase(sweep_bc):
    u1, u2 = (r.u_k for r in rc_resonances(sweep_bc, 2))
    grid = np.union1d(np.linspace(0.15, 1.0, 200), [u1, u2])
    return staircase_sweep(sweep_bc, grid, n_jobs=1)


def test_resonance_identities_and_return(sweep_bc):
    for r in rc_resonances(sweep_bc, 5):
        assert abs(r.T_k * math.sqrt(1 + r.u_k ** 2) - 2 * r.k * math.pi) < 1e-12
        assert abs(r.u_k * r.T_k - sweep_bc.delta_theta) < 1e-12

        exact = integrate_adiabatic(build_waveform(PulseSequence.constant(r.u_k, r.T_k), sweep_bc), NORTH)
        assert abs(exact.final_state().c2) ** 2 < 1e-10

        integrated = integrate_adiabatic(lambda tau, u=r.u_k: u, NORTH, bc=sweep_bc, duration=r.T_k)
        assert abs(integrated.final_state().c2) ** 2 < 1e-10


def test_worked_example(sweep_bc, solved_035):
    assert solved_035.sequence.m == 2
    assert solved_035.sequence.pulse_form == "on-off-on-off-on"
    assert solved_035.residuals.worst() < 1e-10
    assert solved_035.T_rescaled >= math.pi
    assert integrated_fidelity(solved_035.sequence, sweep_bc) < -9


def test_staircase_steps(staircase, sweep_bc):
    assert (staircase["status"] == "ok").all()

    # Contiguous runs of equal m form the steps
    step = (staircase["m"] != staircase["m"].shift()).cumsum()
    for _, rows in staircase.groupby(step):
        assert (np.diff(rows["T_rescaled"].to_numpy()) <= 1e-9).all()

    for r in rc_resonances(sweep_bc, 2):
        row = staircase.loc[np.isclose(staircase["v"], r.u_k, rtol=0, atol=1e-15)]
        assert row["T_rescaled"].iloc[0] == pytest.approx(r.T_k, abs=1e-6)

    assert math.pi <= solve_for_v(sweep_bc, 20.0).T_rescaled <= 1.02 * math.pi


def test_propagator_algebra(rng):
    for _ in range(1000):
        tau1, tau3 = rng.uniform(0.0, 4.0, 2)
        tau2 = rng.uniform(0.0, 2 * math.pi)
        v = rng.uniform(0.05, 3.0)

        for m in (1, 2, 3):
            seq = PulseSequence(v=v, m=m, tau1=tau1, tau2=tau2, tau3=tau3 if m > 1 else 0.0)
            assert abs(complex(sequence_propagator(seq).ax)) < 1e-13

            closed = complex(ay_closed_form(m, seq.tau1, seq.tau2, seq.tau3, v))
            assert abs(closed - ay_generic(seq)) < 1e-12


def test_optimality_consistency(rng):
    for _ in range(500):
        tau1, tau3 = rng.uniform(0.05, 4.0, 2)
        v = rng.uniform(0.05, 3.0)

        tau2 = tau2_from_optimality(tau1, tau3, v)
        assert optimality_residual(tau1, tau2, tau3, v) < 1e-10
        assert abs(coplanarity_determinant(tau1, tau2, tau3, v)) < 1e-9


def test_switching_plane_geometry(rng):
    for _ in range(200):
        p = rng.normal(size=3)
        v = rng.uniform(0.1, 3.0)
        start = AdjointGeometry(-p[1], p)

        mirrored = start.evolve_off(first_return_angle(p))
        assert np.allclose(mirrored.phi, [-p[0], p[1], p[2]], atol=1e-10)

        returned = mirrored.evolve_on(plane_return_time(mirrored.phi, v), v)
        assert np.allclose(returned.phi, p, atol=1e-10)

        for point in (mirrored, returned):
            assert abs(point.sphere_radius() - start.sphere_radius()) < 1e-12


def test_frame_equivalence(sweep_bc, solved_035):
    wf = build_waveform(solved_035.sequence, sweep_bc)
    samples = np.linspace(0.0, wf.total_physical, 50)

    original = integrate_original(wf, sweep_bc, eigenstates(sweep_bc.theta_i)[0], samples=samples)
    transformed = to_adiabatic_frame(original, sweep_bc.omega_rabi).states()
    exact = integrate_adiabatic(wf, NORTH, samples=samples).states()

    assert transformed.shape == exact.shape == (50, 2)
    assert np.all(np.abs(transformed.real - exact.real) < 1e-8)
    assert np.all(np.abs(transformed.imag - exact.imag) < 1e-8)


def test_bounds(sweep_bc, staircase):
    bounds = compute_bounds(sweep_bc)
    assert bounds.T0_physical == pytest.approx(math.pi / sweep_bc.omega_rabi, abs=1e-15)
    assert bounds.T_qsl_physical == sweep_bc.delta_theta / sweep_bc.omega_rabi
    assert (staircase["T_rescaled"] >= math.pi - 1e-9).all()


def test_resonance_dip_matches_integration(sweep_bc, solved_035):
    root = solved_035.sequence.tau3
    upper = sweep_bc.delta_theta / 0.35
    grid = np.union1d(np.linspace(0.05 * upper, 0.95 * upper, 49), [root])
    scan = resonance_scan(sweep_bc, 0.35, 2, tau3_grid=grid)
    assert len(scan) == 50

    for row in scan.itertuples(index=False):
        seq = PulseSequence(v=0.35, m=2, tau1=row.tau1, tau2=row.tau2, tau3=row.tau3)
        wf = build_waveform(seq, sweep_bc)
        trajectory = integrate_original(wf, sweep_bc, eigenstates(sweep_bc.theta_i)[0],
                                        samples=np.array([0.0, wf.total_physical]))
        error = abs(frame_transform(trajectory.final_state(), sweep_bc.theta_f).c2) ** 2

        # Compared as 1 - F, the log is ill-conditioned near the dip
        assert abs(error - 10 ** row.log_error) < 1e-8

    at_root = scan.loc[scan["tau3"] == root, "log_error"].iloc[0]
    assert at_root < -10
    assert at_root == scan["log_error"].min()
