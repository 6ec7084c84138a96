"""Exception types shared across the package."""


class SpdelabError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(SpdelabError, ValueError):
    """A parameter is outside its admissible range."""


class PreconditionError(SpdelabError, ValueError):
    """A documented operation precondition does not hold."""


class EvaluationError(SpdelabError, RuntimeError):
    """A user-supplied function produced non-finite values.

    Carries the offending input point when available.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SimulationError(SpdelabError, RuntimeError):
    """A path simulation failed; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NoContractionError(SpdelabError, RuntimeError):
    """Picard iteration is not contracting; the resolvent shift is too small."""

    def __init__(self, message, measured_factor=None, suggested_lambda=None):
        super().__init__(message)
        self.measured_factor = measured_factor
        self.suggested_lambda = suggested_lambda


class SolverConvergenceError(SpdelabError, RuntimeError):
    """The iteration budget was exhausted before reaching tolerance."""


class NonContainmentError(SpdelabError, RuntimeError):
    """Escalating truncation radii never contained the path on [0, T].

    ``exit_history`` lists (radius, exit_index) pairs for the attempted radii.
    """

    def __init__(self, message, exit_history=None):
        super().__init__(message)
        self.exit_history = exit_history or []


class ConfigError(SpdelabError, ValueError):
    """Invalid run configuration; carries the section/field that failed."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
