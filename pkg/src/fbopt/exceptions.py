class FbOptError(Exception):
    """Base class for all package errors."""


class NotConvexError(FbOptError, ValueError):
    """Cost Hessian is not positive definite."""


class IllPosedError(FbOptError, ValueError):
    """Controller/plant pairing is not well-posed or violates a structural requirement."""


class EquilibriumError(FbOptError):
    """The optimal equilibrium cannot be constructed.

    ``stage`` is ``"steady_state"`` when no input holds the minimizer at rest,
    and ``"integral_gain"`` when the integrator cannot supply that input.
    """

    def __init__(self, message, stage, residual):
        super().__init__(message)
        self.stage = stage
        self.residual = residual


class DivergenceError(FbOptError):
    """Simulation state norm crossed the divergence threshold.

    The partially filled trajectory up to the last finite step is kept on
    ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class LmiInfeasible(FbOptError):
    def __init__(self, message, margin):
        super().__init__(message)
        self.margin = margin


class SolverFailure(FbOptError):
    """Every SDP backend raised or returned no solution."""


class ConfigError(FbOptError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
