import json
import math
import sys
import click
import numpy as np
import pandas as pd
from datetime import datetime
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Union
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.config.config import (
    DEFAULT_K_MAX,
    DEFAULT_M_MAX,
    DEFAULT_OMEGA_RABI,
    DEFAULT_TOL,
    LOGS,
    MIN_SAMPLES,
    OUTPUT_DIR,
    ROOT_ACCEPT,
)
from src.config.errors import (
    ApforgeError,
    BoundaryConditionError,
    DegenerateBranchError,
    InvalidSequenceError,
    NoSolutionError,
    NumericalFailureError,
)
from src.algebra.su2core import SpinState, sequence_propagator
from src.protocols.protocols import (
    BoundaryConditions,
    angles_from_detunings,
    compute_bounds,
    eigenstates,
    rc_resonances,
)
from src.solver.sequence import PulseSequence, SolverResult
from src.solver.solver import (
    evaluate_residuals,
    resonance_scan,
    solve_for_v,
    staircase_sweep,
)
from src.dynamics.dynamics import (
    build_waveform,
    fidelity_error,
    frame_transform,
    integrate_adiabatic,
    integrate_original,
)

EXIT_OK, EXIT_INPUT, EXIT_NO_SOLUTION, EXIT_NUMERICAL = 0, 1, 2, 3
BOUNDARY_COMMANDS = {"solve", "staircase", "resonances", "scan"}
SOLVER_COMMANDS = {"solve", "scan"}

# ==========================
# === RUN CONFIGURATION  ===
# ==========================

class RunConfig(BaseModel):
    """Validated parameters of one CLI invocation."""

    model_config = ConfigDict(frozen=True)

    command: str
    theta_i: Optional[float] = None
    theta_f: Optional[float] = None
    delta_i: Optional[float] = None
    delta_f: Optional[float] = None
    omega_rabi: float = DEFAULT_OMEGA_RABI
    v: Optional[float] = Field(default=None, ge=0)
    v_start: Optional[float] = Field(default=None, gt=0)
    v_stop: Optional[float] = Field(default=None, gt=0)
    v_count: int = Field(default=1, ge=1)
    v_spacing: Literal["linear", "log"] = "linear"
    m_max: int = Field(default=DEFAULT_M_MAX, ge=1)
    tol: float = Field(default=DEFAULT_TOL, gt=0)
    k_max: int = Field(default=DEFAULT_K_MAX, ge=1)
    optimality: Literal["geometric", "published"] = "geometric"
    output_format: Literal["csv", "json"] = "csv"
    out: Optional[Path] = None

    @model_validator(mode="after")
    def _check_inputs(self) -> "RunConfig":
        angles = (self.theta_i, self.theta_f)
        detunings = (self.delta_i, self.delta_f)

        for name, pair in (("angle", angles), ("detuning", detunings)):
            if (pair[0] is None) != (pair[1] is None):
                raise ValueError(f"the {name} pair needs both its initial and final value")

        has_angles = angles[0] is not None
        has_detunings = detunings[0] is not None
        if has_angles and has_detunings:
            raise ValueError("give either --theta-i/--theta-f or --delta-i/--delta-f, not both")
        if self.command in BOUNDARY_COMMANDS and not (has_angles or has_detunings):
            raise ValueError("boundary conditions missing: give --theta-i/--theta-f or --delta-i/--delta-f")

        # The solver needs a switched-on pulse; simulate also accepts free precession
        if self.command in SOLVER_COMMANDS and self.v is not None and self.v <= 0:
            raise ValueError(f"--v must be positive, got {self.v}")

        if self.command == "staircase":
            if self.v_start is None or self.v_stop is None:
                raise ValueError("a sweep needs --v-start and --v-stop")
            if self.v_count > 1 and not self.v_stop > self.v_start:
                raise ValueError("--v-stop must be larger than --v-start when --v-count > 1")
        return self

    @property
    def has_boundary(self) -> bool:
        return self.theta_i is not None or self.delta_i is not None

    def boundary(self) -> BoundaryConditions:
        if self.theta_i is not None:
            return BoundaryConditions.from_angles(self.theta_i, self.theta_f, self.omega_rabi)
        if self.delta_i is not None:
            return angles_from_detunings(self.delta_i, self.delta_f, self.omega_rabi)
        raise BoundaryConditionError("no boundary conditions given")

    def v_grid(self) -> np.ndarray:
        if self.v_start is None or self.v_stop is None:
            raise ValueError("a sweep needs --v-start and --v-stop")
        if self.v_count == 1:
            return np.array([self.v_start])
        if self.v_spacing == "log":
            return np.geomspace(self.v_start, self.v_stop, self.v_count)
        return np.linspace(self.v_start, self.v_stop, self.v_count)


# =====================
# === OUTPUT        ===
# =====================

def _status(message: str) -> None:
    click.echo(message, err=True)


def emit(payload: Union[pd.DataFrame, dict, list], fmt: str, out: Optional[Path]) -> None:
    """Write a table or record to a file or stdout, without timestamps."""
    if isinstance(payload, pd.DataFrame):
        if fmt == "json":
            text = json.dumps(payload.to_dict(orient="records"), indent=2)
        else:
            text = payload.to_csv(index=False)
    else:
        if fmt == "csv":
            text = pd.json_normalize(payload).to_csv(index=False)
        else:
            text = json.dumps(payload, indent=2)

    if out is None:
        click.echo(text.rstrip("\n"))
        return

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    _status(f"📝 Written: {out}")


def write_failed_log(rows: Sequence[dict], log_dir: Optional[Path] = None) -> Optional[Path]:
    """Append failed sweep points to a dated log file, one v|||status per line."""
    if not rows:
        return None

    log_dir = LOGS if log_dir is None else log_dir
    log_dir.mkdir(parents=True, exist_ok=True)
    log_path = log_dir / f"failed_points_{datetime.now().strftime('%Y-%m-%d')}.log"

    with open(log_path, "a", encoding="utf-8") as f:
        for row in rows:
            f.write(f"{float(row['v'])!r}|||{row['status']}\n")

    _status(f"📝 Failed points logged to: {log_path}")
    return log_path


# ==========================
# === SHARED PIPELINES   ===
# ==========================

def integrated_fidelity(seq: PulseSequence, bc: BoundaryConditions, samples: Optional[np.ndarray] = None) -> float:
    """log10(1 - F) from the original-frame ODE started in the upper eigenstate."""
    wf = build_waveform(seq, bc)
    a0 = eigenstates(bc.theta_i)[0]
    trajectory = integrate_original(wf, bc, a0, samples=samples)
    b_final = frame_transform(trajectory.final_state(), bc.theta_f)
    return fidelity_error(b_final)


def _endpoints(seq: PulseSequence, bc: BoundaryConditions) -> np.ndarray:
    return np.array([0.0, build_waveform(seq, bc).total_physical])


def verify_report(result: SolverResult) -> pd.DataFrame:
    """Independent pass/fail checks of a solver result.

    Returns:
        pd.DataFrame: Columns check, status, value, threshold.
    """
    bc, seq = result.boundary, result.sequence
    residuals = evaluate_residuals(seq, bc.delta_theta, result.optimality_form)
    propagator = sequence_propagator(seq)
    wf = build_waveform(seq, bc)
    delta = wf.table()["delta"].to_numpy()

    rows = []

    def check(name: str, value: float, threshold: float, passed: bool) -> None:
        rows.append({"check": name, "status": "pass" if passed else "fail", "value": value, "threshold": threshold})

    check("area", residuals.area, 1e-10, residuals.area < 1e-10)

    if residuals.optimality is None:
        rows.append({"check": "optimality", "status": "vacuous-pass", "value": 0.0, "threshold": 1e-10})
    else:
        check("optimality", residuals.optimality, 1e-10, residuals.optimality < 1e-10)

    check("a_y_imag", residuals.a_y_imag, ROOT_ACCEPT, residuals.a_y_imag < ROOT_ACCEPT)
    check("a_y_real", residuals.a_y_real, 1e-12, residuals.a_y_real < 1e-12)

    a_x = abs(complex(propagator.ax))
    check("a_x", a_x, 1e-13, a_x < 1e-13)

    fidelity = integrated_fidelity(seq, bc)
    check("fidelity", fidelity, -9.0, fidelity < -9.0)

    check("T_bound", seq.total_duration, math.pi - 1e-9, seq.total_duration >= math.pi - 1e-9)

    duration_gap = abs(result.T_rescaled - seq.total_duration)
    check("T_rescaled", duration_gap, 1e-9, duration_gap < 1e-9)

    worst_step = float(np.min(np.diff(delta))) if delta.size > 1 else 0.0
    check("delta_monotone", worst_step, -1e-12, worst_step >= -1e-12)

    return pd.DataFrame(rows, columns=["check", "status", "value", "threshold"])


def load_result(path: Path) -> SolverResult:
    """Read a solve output back into a validated SolverResult.

    Raises:
        click.BadParameter: If the file is not valid JSON.
        ValidationError: If the record is incomplete or inconsistent.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise click.BadParameter(f"{path} is not valid JSON ({e})", param_hint="SOURCE") from e

    return SolverResult.model_validate(payload)


# ======================
# === COMMANDS       ===
# ======================

def boundary_options(f):
    options = [
        click.option("--theta-i", type=float, default=None, help="Initial field angle (rad)."),
        click.option("--theta-f", type=float, default=None, help="Final field angle (rad)."),
        click.option("--delta-i", type=float, default=None, help="Initial detuning (units of Omega)."),
        click.option("--delta-f", type=float, default=None, help="Final detuning (units of Omega)."),
        click.option("--omega", "omega_rabi", type=float, default=DEFAULT_OMEGA_RABI, show_default=True,
                     help="Rabi frequency."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def solver_options(f):
    options = [
        click.option("--m-max", type=int, default=DEFAULT_M_MAX, show_default=True, help="Largest off-pulse count."),
        click.option("--tol", type=float, default=DEFAULT_TOL, show_default=True, help="Bisection tolerance."),
        click.option("--optimality", type=click.Choice(["geometric", "published"]), default="geometric",
                     show_default=True, help="Form of the optimality coefficient A."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def output_options(default_format: str):
    def decorate(f):
        f = click.option("--out", type=click.Path(path_type=Path), default=None, help="Output file.")(f)
        return click.option("--format", "output_format", type=click.Choice(["csv", "json"]),
                            default=default_format, show_default=True)(f)
    return decorate


@click.group()
def cli() -> None:
    """Minimum-time on-off Roland-Cerf passages: solve, sweep, simulate, verify."""


@cli.command()
@boundary_options
@click.option("--v", type=float, required=True, help="Maximum control amplitude.")
@solver_options
@output_options("json")
def solve(**kwargs) -> int:
    """Optimal sequence at one amplitude, checked by ODE integration."""
    cfg = RunConfig(command="solve", **kwargs)
    bc = cfg.boundary()

    _status(f"🚀 Solving v={cfg.v} (m <= {cfg.m_max})")
    result = solve_for_v(bc, cfg.v, cfg.m_max, cfg.tol, cfg.optimality)
    result = result.model_copy(update={"fidelity_error": integrated_fidelity(result.sequence, bc)})

    _status(f"✅ {result.sequence.pulse_form} (m={result.sequence.m}), T={result.T_rescaled!r}")
    emit(result.model_dump(mode="json"), cfg.output_format, cfg.out)
    return EXIT_OK


@cli.command()
@boundary_options
@click.option("--v-start", type=float, required=True)
@click.option("--v-stop", type=float, required=True)
@click.option("--v-count", type=int, default=200, show_default=True)
@click.option("--v-log", is_flag=True, help="Logarithmic spacing.")
@solver_options
@output_options("csv")
def staircase(v_log: bool, **kwargs) -> int:
    """Optimal duration against amplitude; failed points end up in the status column."""
    cfg = RunConfig(command="staircase", v_spacing="log" if v_log else "linear", **kwargs)
    bc = cfg.boundary()
    grid = cfg.v_grid()

    _status(f"🚀 Sweeping {len(grid)} amplitudes in [{grid[0]}, {grid[-1]}]")
    df = staircase_sweep(bc, grid, cfg.m_max, cfg.tol, cfg.optimality, progress=True)

    failed = df[df["status"] != "ok"]
    if not failed.empty:
        _status(f"⚠️ {len(failed)} point(s) without a solution")
        write_failed_log(failed.to_dict(orient="records"))

    emit(df, cfg.output_format, cfg.out)
    return EXIT_OK


@cli.command()
@boundary_options
@click.option("--k-max", type=int, default=DEFAULT_K_MAX, show_default=True)
@output_options("csv")
def resonances(**kwargs) -> int:
    """Resonant amplitudes and durations of the constant-control protocol."""
    cfg = RunConfig(command="resonances", **kwargs)
    bc = cfg.boundary()

    rows = [
        {
            "k": r.k,
            "u_k": r.u_k,
            "T_k": r.T_k,
            "T_tilde_k": r.T_tilde_k,
            "shortcut_residual": r.shortcut_residual(),
            "angle_residual": r.angle_residual(bc.delta_theta),
        }
        for r in rc_resonances(bc, cfg.k_max)
    ]

    bounds = compute_bounds(bc)
    _status(f"📏 T0 = pi, T0 physical = {bounds.T0_physical!r}, speed limit = {bounds.T_qsl_physical!r}")
    emit(pd.DataFrame(rows), cfg.output_format, cfg.out)
    return EXIT_OK


@cli.command()
@boundary_options
@click.option("--from-json", "from_json", type=click.Path(exists=True, path_type=Path), default=None,
              help="Solver output to simulate.")
@click.option("--rc-k", type=int, default=None, help="Simulate the k-th constant-control resonance.")
@click.option("--v", type=float, default=None)
@click.option("--m", type=int, default=None)
@click.option("--tau1", type=float, default=None)
@click.option("--tau2", type=float, default=None)
@click.option("--tau3", type=float, default=0.0)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=OUTPUT_DIR / "simulate",
              show_default=True, help="Output directory.")
def simulate(from_json: Optional[Path], rc_k: Optional[int], m: Optional[int], tau1: Optional[float],
             tau2: Optional[float], tau3: float, out_dir: Path, **kwargs) -> int:
    """Trajectories in both frames plus the detuning waveform, as CSV."""
    cfg = RunConfig(command="simulate", **kwargs)
    sources = sum([from_json is not None, rc_k is not None, tau1 is not None])
    if sources != 1:
        raise click.UsageError("give exactly one of --from-json, --rc-k or inline --v/--m/--tau1/--tau2")

    if from_json is not None:
        result = load_result(from_json)
        bc, seq = result.boundary, result.sequence
    elif rc_k is not None:
        bc = cfg.boundary()
        if rc_k < 1:
            raise click.UsageError("--rc-k must be >= 1")
        resonance = rc_resonances(bc, rc_k)[-1]
        seq = PulseSequence.constant(resonance.u_k, resonance.T_k)
    else:
        bc = cfg.boundary()
        if cfg.v is None or m is None or tau2 is None:
            raise click.UsageError("inline sequences need --v, --m, --tau1 and --tau2")
        seq = PulseSequence(v=cfg.v, m=m, tau1=tau1, tau2=tau2, tau3=tau3)

    _status(f"🚀 Simulating {seq.pulse_form} (v={seq.v}, T={seq.total_duration!r})")
    wf = build_waveform(seq, bc)

    original = integrate_original(wf, bc, eigenstates(bc.theta_i)[0])
    adiabatic = integrate_adiabatic(wf, SpinState(1.0 + 0j, 0j, frame="adiabatic"))

    original.to_csv(out_dir / "trajectory_original.csv")
    adiabatic.to_csv(out_dir / "trajectory_adiabatic.csv")
    wf.table().to_csv(out_dir / "waveform.csv", index=False)

    error = fidelity_error(frame_transform(original.final_state(), bc.theta_f))
    _status(f"✅ log10(1 - F) = {error!r}, written to {out_dir}")
    return EXIT_OK


@cli.command()
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@output_options("csv")
def verify(source: Path, **kwargs) -> int:
    """Re-check a solver output; exits 3 when any check fails."""
    cfg = RunConfig(command="verify", **kwargs)
    report = verify_report(load_result(source))
    emit(report, cfg.output_format, cfg.out)

    failed = report[report["status"] == "fail"]
    if failed.empty:
        _status("✅ All checks passed")
        return EXIT_OK

    _status(f"❌ Failed checks: {', '.join(failed['check'])}")
    return EXIT_NUMERICAL


@cli.command()
@boundary_options
@click.option("--v", type=float, required=True)
@click.option("--m", type=click.IntRange(min=2), default=2, show_default=True)
@click.option("--points", type=click.IntRange(min=2), default=MIN_SAMPLES, show_default=True)
@click.option("--integrate", is_flag=True, help="Add the error from the original-frame ODE.")
@click.option("--optimality", type=click.Choice(["geometric", "published"]), default="geometric")
@output_options("csv")
def scan(m: int, points: int, integrate: bool, **kwargs) -> int:
    """Return-condition error along tau3 with tau1 and tau2 slaved."""
    cfg = RunConfig(command="scan", **kwargs)
    bc = cfg.boundary()

    df = resonance_scan(bc, cfg.v, m, points=points, form=cfg.optimality)

    if integrate:
        integrated: List[float] = []
        for row in df.itertuples(index=False):
            if not np.isfinite(row.tau2):
                integrated.append(math.nan)
                continue
            seq = PulseSequence(v=cfg.v, m=m, tau1=row.tau1, tau2=row.tau2, tau3=row.tau3)
            integrated.append(integrated_fidelity(seq, bc, samples=_endpoints(seq, bc)))
        df["log_error_integrated"] = integrated

    emit(df, cfg.output_format, cfg.out)
    return EXIT_OK


# ======================
# === ENTRY POINT    ===
# ======================

def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures to exit codes.

    Returns:
        int: 0 ok, 1 usage or input error, 2 no solution, 3 numerical failure.
    """
    try:
        code = cli.main(args=list(argv) if argv is not None else None, prog_name="apforge", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_INPUT
    except click.exceptions.Abort:
        _status("🛑 Cancelled by user.")
        return EXIT_INPUT
    except (NoSolutionError, DegenerateBranchError) as e:
        _status(f"❌ No solution: {e}")
        return EXIT_NO_SOLUTION
    except (BoundaryConditionError, InvalidSequenceError, ValidationError) as e:
        _status(f"❌ Invalid input: {e}")
        return EXIT_INPUT
    except NumericalFailureError as e:
        _status(f"❌ Numerical failure at t={e.time_stamp}: {e}")
        return EXIT_NUMERICAL
    except (ApforgeError, ArithmeticError, RuntimeError, ValueError) as e:
        # Inputs are validated before any numerics run, so anything left is internal
        _status(f"❌ Numerical failure: {e}")
        return EXIT_NUMERICAL

    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
