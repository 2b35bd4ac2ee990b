"""Exception hierarchy shared by every stage of the solver."""


class ApforgeError(Exception):
    """Base class for all errors raised by apforge."""


class BoundaryConditionError(ApforgeError, ValueError):
    """Field angles, detunings or Rabi frequency violate their invariants."""


class InvalidSequenceError(ApforgeError, ValueError):
    """A pulse sequence is structurally invalid (m < 1, negative durations)."""


class UnconstrainedBranchError(ApforgeError):
    """A = B = 0: the optimality relation does not constrain tau2."""


class DegenerateBranchError(ApforgeError):
    """A = 0 with B != 0: tau2 collapses onto 0 or 2*pi."""


class NoSolutionError(ApforgeError):
    """No off-pulse count up to m_max produces a root at this amplitude."""


class NumericalFailureError(ApforgeError):
    """Integrator breakdown or an internal bound violation."""

    def __init__(self, message: str, time_stamp: float = float("nan")) -> None:
        super().__init__(message)
        # Time at which the failure was detected (nan when not applicable)
        self.time_stamp = time_stamp
