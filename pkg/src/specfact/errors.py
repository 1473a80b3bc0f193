"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition (shape, range, name)."""


class DomainError(ValueError):
    """Input is outside the mathematical domain of the operation."""


class PreconditionError(ValueError):
    """A numerical precondition (convergence radius, positivity bound) fails."""


class PositivityError(PreconditionError):
    """An eigenvalue update would produce a non-positive entry."""


class NumericalError(RuntimeError):
    """An internal numerical routine failed unexpectedly."""


class EvaluationError(RuntimeError):
    """A black-box objective returned a non-finite value.

    Carries the offending point as ``point``.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ConfigError(ValueError):
    """Experiment specification is inconsistent or unsupported."""
