import math
from typing import List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.protocols.protocols import BoundaryConditions

OptimalityForm = Literal["geometric", "published"]

# ======================
# === PULSE SEQUENCE ===
# ======================

class PulseSequence(BaseModel):
    """Bang-bang control in rescaled time.

    Two boundary 'on' pulses of duration tau1 at amplitude v, m 'off' pulses
    of duration tau2 and m - 1 interior 'on' pulses of duration tau3,
    alternating: on, off, (on, off) * (m - 1), on.
    """

    model_config = ConfigDict(frozen=True)

    v: float = Field(ge=0.0)
    m: int = Field(ge=1)
    tau1: float = Field(ge=0.0)
    tau2: float = Field(ge=0.0, lt=2.0 * math.pi)
    tau3: float = Field(default=0.0, ge=0.0)

    @field_validator("v", "tau1", "tau2", "tau3")
    @classmethod
    def _finite(cls, value: float) -> float:
        # The ge bounds alone let +inf through
        if not math.isfinite(value):
            raise ValueError("durations and amplitude must be finite")
        return value

    @model_validator(mode="after")
    def _single_off_pulse(self) -> "PulseSequence":
        if self.m == 1 and self.tau3 != 0.0:
            raise ValueError("tau3 must be 0 when m = 1")
        return self

    @classmethod
    def constant(cls, v: float, duration: float) -> "PulseSequence":
        """Constant control v over the whole duration (empty off-pulse)."""
        return cls(v=v, m=1, tau1=0.5 * duration, tau2=0.0, tau3=0.0)

    @property
    def total_duration(self) -> float:
        """T = 2 tau1 + m tau2 + (m - 1) tau3."""
        return 2.0 * self.tau1 + self.m * self.tau2 + (self.m - 1) * self.tau3

    @property
    def on_duration(self) -> float:
        """Total time spent at amplitude v, 2 tau1 + (m - 1) tau3."""
        return 2.0 * self.tau1 + (self.m - 1) * self.tau3

    @property
    def area(self) -> float:
        """Angle swept by the control, v times the total 'on' time."""
        return self.v * self.on_duration

    @property
    def pulse_form(self) -> str:
        """Pulse pattern such as "on-off-on-off-on"."""
        return "-".join(kind for kind, _ in self.segments())

    def segments(self) -> List[Tuple[str, float]]:
        """Ordered (kind, rescaled duration) pairs, 2m + 1 of them."""
        parts = [("on", self.tau1), ("off", self.tau2)]
        for _ in range(self.m - 1):
            parts += [("on", self.tau3), ("off", self.tau2)]
        parts.append(("on", self.tau1))
        return parts

    def area_residual(self, delta_theta: float) -> float:
        """Distance of the swept angle from the target.

        Args:
            delta_theta (float): Angle the passage must sweep, theta_i - theta_f.

        Returns:
            float: |v (2 tau1 + (m - 1) tau3) - delta_theta|.
        """
        return abs(self.area - delta_theta)


# ======================
# === SOLVER OUTPUT  ===
# ======================

class Residuals(BaseModel):
    """Residuals of the three defining equations at a solution.

    optimality is None when the condition is vacuous (m = 1).
    """

    model_config = ConfigDict(frozen=True)

    area: float
    optimality: Optional[float]
    a_y_imag: float
    a_y_real: float

    def worst(self) -> float:
        """Largest residual, skipping a vacuous optimality entry."""
        values = [self.area, self.a_y_imag, self.a_y_real]
        if self.optimality is not None:
            values.append(self.optimality)
        return max(values)


class Candidate(BaseModel):
    """Root found by the search; the optimum is the candidate with the smallest T_rescaled."""

    model_config = ConfigDict(frozen=True)

    m: int
    tau1: float
    tau2: float
    tau3: float
    T_rescaled: float


class SolverResult(BaseModel):
    """Minimum-time sequence at one amplitude, with its diagnostics."""

    model_config = ConfigDict(frozen=True)

    boundary: BoundaryConditions
    sequence: PulseSequence
    T_rescaled: float
    T_physical: float
    fidelity_error: float
    residuals: Residuals
    optimality_form: OptimalityForm = "geometric"
    candidates: List[Candidate] = Field(default_factory=list)
