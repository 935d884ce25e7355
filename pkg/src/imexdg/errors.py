"""Exception types shared across the solver."""


class InvalidArgumentError(ValueError):
    """An argument is outside the documented domain of an operation."""


class InvalidGeometryError(ValueError):
    """Mesh or mapping parameters produce a degenerate geometry."""


class SingularGeometryError(InvalidGeometryError):
    """A Jacobian weight is zero or negative where positivity is required."""


class StateInvalidError(ValueError):
    """A thermodynamic state violates positivity or EOS consistency."""


class InvalidConfigError(ValueError):
    """A run configuration cannot be realized (bad case parameters)."""


class SolverFailureError(RuntimeError):
    """An iterative solver did not reach its tolerance.

    Carries diagnostic context (residual history, cell index) when available.
    """

    def __init__(self, message, residuals=None, cell=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
        self.cell = cell


class SpdViolationError(RuntimeError):
    """CG detected a direction of non-positive curvature."""


class PreconditionerBuildError(RuntimeError):
    """A preconditioner diagonal contains a non-positive or non-finite entry."""

    def __init__(self, message, entry=None):
        super().__init__(message)
        self.entry = entry


class TimeStepRejectionError(RuntimeError):
    """A stage update produced an inadmissible state (e.g. negative density)."""

    def __init__(self, message, min_value=None, cell=None, stage=None):
        super().__init__(message)
        self.min_value = min_value
        self.cell = cell
        self.stage = stage
