"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration problems (bad or missing
config fields, invalid physical parameters, inconsistent controller setup)
exit with 2, numerical failures (non-finite states, non-converging solves)
exit with 3.
"""


class InvalidParameterError(ValueError):
    """A physical parameter violates its validity constraints."""


class RangeError(ValueError):
    """An index, time, or horizon lies outside the supported range."""


class ConfigurationError(ValueError):
    """A run configuration is malformed or internally inconsistent."""


class NumericError(RuntimeError):
    """A numerical computation failed (non-finite value, no convergence)."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
