"""Exception types shared across the library."""


class SimulationError(RuntimeError):
    """Base class for runtime failures inside a simulation."""


class PlanarDegeneracyError(SimulationError):
    """Planar field components fell below the degeneracy threshold.

    Carries the offending state so a run can be reported and aborted.
    """

    def __init__(self, message, state=None, t=None):
        super().__init__(message)
        self.state = state
        self.t = t


class DivergenceError(SimulationError):
    """A state entry exceeded the divergence guard."""

    def __init__(self, message, state=None, t=None):
        super().__init__(message)
        self.state = state
        self.t = t


class CollisionStateError(SimulationError):
    """Two robots are at or inside the safety radius; the barrier is undefined."""


class InfeasibleCorrectionError(SimulationError):
    """The collision-avoidance QP had no feasible minimum-norm solution."""


class MissingNeighborError(LookupError):
    """A neighbor's communicated value is absent (dropped message)."""


class LyapunovNotApplicableError(ValueError):
    """The K = I Lyapunov certificate was requested with non-identity gains."""


class ScenarioValidationError(ValueError):
    """Scenario document failed validation; lists every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
