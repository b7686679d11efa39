"""Exception hierarchy shared by the library and the command line.

Every error carries the process exit code the CLI reports for it, so the
mapping lives next to the error instead of in a lookup table.
"""


class CadlagLineError(Exception):
    """Base class for all library errors."""

    exit_code = 4


class ValidationError(CadlagLineError):
    """Structurally invalid path or time change (bad breakpoints, lengths, invariants)."""

    exit_code = 2


class PathFormatError(ValidationError):
    """Path JSON document does not follow the path schema."""


class ConfigError(CadlagLineError):
    """Experiment or session configuration rejected before any computation."""

    exit_code = 2


class DomainError(CadlagLineError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 3


class CompositionDomainError(DomainError):
    """Inner time change leaves the domain of the outer path."""

    def __init__(self, message: str, required_horizon: float):
        super().__init__(message)
        self.required_horizon = float(required_horizon)


class InsufficientHorizonError(DomainError):
    """Truncated path too short for the requested rho-infinity tolerance."""

    def __init__(self, message: str, required_horizon: float):
        super().__init__(message)
        self.required_horizon = float(required_horizon)


class InvariantViolation(CadlagLineError):
    """Internal consistency check failed; indicates a bug, not bad input."""

    exit_code = 4
