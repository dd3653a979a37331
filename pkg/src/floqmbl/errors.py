"""Exception types shared across the package."""


class FloqError(Exception):
    """Base class for all package errors."""


class InvalidSizeError(FloqError, ValueError):
    """A lattice or register size outside the supported range."""


class DomainError(FloqError, ValueError):
    """A parameter outside its mathematical domain."""


class CapacityError(FloqError, MemoryError):
    """The request exceeds a dense-simulation cap."""


class PatternError(FloqError, ValueError):
    """A site pattern cannot be built or used as requested."""


class InputError(FloqError, ValueError):
    """Malformed input such as duplicate Pauli strings."""


class CoverageError(FloqError, ValueError):
    """A measurement scheme does not cover the requested correlators."""


class FidelityError(FloqError, RuntimeError):
    """Truncation discarded too much operator weight."""


class OverfittingError(FloqError, ValueError):
    """Too few data points for the number of fitted coefficients."""


class ConfigError(FloqError, ValueError):
    """Invalid experiment configuration; ``violations`` lists every problem."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DependencyError(FloqError, LookupError):
    """A figure needs a task output that is absent from the bundle."""
