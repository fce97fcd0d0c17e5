"""Exception hierarchy shared by all modules."""


class ScatterlabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ScatterlabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class RangeError(ScatterlabError, ValueError):
    """Request outside what a grid or quadrature can resolve."""


class ConfigError(ScatterlabError, ValueError):
    """Invalid or inconsistent configuration."""


class SolverError(ScatterlabError, RuntimeError):
    """Iterative solver failed to contract."""


class ConvergenceError(ScatterlabError, RuntimeError):
    """A limit did not converge to the requested tolerance."""
