"""Exception hierarchy shared by the solver layers."""


class SonicEPError(Exception):
    """Base class for all package errors."""


class DomainError(SonicEPError, ValueError):
    """An argument lies outside the domain of a scalar function."""


class NoSolutionError(SonicEPError, ValueError):
    """An implicit equation has no solution in the admissible range."""


class ParameterError(SonicEPError, ValueError):
    """Invalid problem, grid or numerical parameters."""


class AssemblyError(SonicEPError, ValueError):
    """A discrete state violates the positivity invariants at some node."""

    def __init__(self, message: str, node: int | None = None, field: str | None = None):
        super().__init__(message)
        self.node = node
        self.field = field


class BracketError(SonicEPError, ValueError):
    """A shooting bracket does not enclose a sign change."""


class ConfigError(SonicEPError, ValueError):
    """A run configuration is malformed; the message names the key."""
