"""Exception hierarchy shared by every module."""


class MVSDEError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(MVSDEError, ValueError):
    """Invalid configuration or mismatched dimensions.

    ``path`` locates the offending field when the error comes from a config
    document.
    """

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class NumericError(MVSDEError, ArithmeticError):
    """A non-finite value appeared during evaluation or stepping."""

    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class DegeneracyError(MVSDEError, ArithmeticError):
    """A matrix that must be nondegenerate is (numerically) singular."""

    def __init__(self, message, eigenvalue=None, location=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.location = location


class DomainError(MVSDEError, ValueError):
    """A path left the domain where a construction is defined."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StreamCollisionError(MVSDEError, ValueError):
    """Two objects that must be independent share an RNG stream lineage."""
