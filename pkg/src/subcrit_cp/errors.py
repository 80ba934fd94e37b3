"""Exception types raised across the package."""


class SubcritError(Exception):
    """Base class for all package errors."""


class InvalidKernelError(SubcritError, ValueError):
    """Infection kernel violates a(i,i)=0, nonnegativity or distinctness."""


class DisconnectedMetricError(SubcritError):
    """Symmetrized kernel support does not generate the group."""


class NoClassError(SubcritError, ValueError):
    """The empty configuration has no shift class."""


class CapsTooLargeError(SubcritError):
    """State enumeration exceeded the configured hard limit."""

    def __init__(self, message, partial_count):
        super().__init__(message)
        self.partial_count = partial_count


class ConvergenceError(SubcritError):
    """An iterative solver did not reach its tolerance."""


class EmptyLawError(SubcritError):
    """No surviving replicates (or zero surviving mass) to build a law from."""


class BracketError(SubcritError, ValueError):
    """A bisection bracket does not straddle a sign change."""


class ConfigError(SubcritError, ValueError):
    """Invalid run configuration."""
