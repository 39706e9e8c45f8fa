"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Input data violates a structural or value constraint."""


class ConfigError(ValueError):
    """A configuration object is inconsistent or incomplete."""


class UnimputableVariableError(ValueError):
    """A variable has no observed training value to learn from."""


class NoEventsError(ValueError):
    """A survival fit was requested on data without any event."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge.

    Parameters
    ----------
    message : str
        Human readable description.
    gradient_norm : float, optional
        Max-norm of the score at the last iterate.
    """

    def __init__(self, message, gradient_norm=None):
        super().__init__(message)
        self.gradient_norm = gradient_norm


class SingularSystemError(ValueError):
    """A linear system in a solver is singular."""
