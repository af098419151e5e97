"""Exception hierarchy for the simulator.

Every error raised by the package derives from :class:`ProtmeasError`, so
callers (and the CLI) can distinguish configuration problems, sizing
problems, and numerical non-convergence without string matching.
"""


class ProtmeasError(Exception):
    """Base class for all package errors."""


class ValidationError(ProtmeasError):
    """An input violates a structural contract (norm, hermiticity, dims)."""


class SizingError(ProtmeasError):
    """A dimension or width falls outside the resolvable / supported band."""


class DomainError(ProtmeasError):
    """A scalar argument lies outside its mathematical domain."""


class PreconditionError(ProtmeasError):
    """A physical precondition fails (degenerate level, bad window)."""


class ModeError(ProtmeasError):
    """The requested measurement mode does not apply to this configuration."""


class SetupError(ProtmeasError):
    """A derived construction (conjugate coordinate, calibration) is impossible."""


class WraparoundError(ProtmeasError):
    """Pointer marginal carries significant weight near the box edge."""


class ConvergenceError(ProtmeasError):
    """Step doubling hit its cap with the error estimate still above tolerance."""

    def __init__(self, message: str, estimate: float, n_steps: int):
        super().__init__(message)
        self.estimate = estimate
        self.n_steps = n_steps


class ConfigError(ProtmeasError):
    """A configuration file is malformed; `field` names the offender."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class OutputError(ProtmeasError):
    """An output file could not be written; carries the path."""

    def __init__(self, message: str, path: str):
        super().__init__(message)
        self.path = path
