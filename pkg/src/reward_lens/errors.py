"""Exception types shared across the package."""

from __future__ import annotations


class InputError(ValueError):
    """Invalid argument or precondition violation."""


class RewardFileError(ValueError):
    """Malformed or invalid reward / checkpoint file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(RewardFileError):
    """File parsed but contains invalid values (NaN, inf, wrong shape)."""


class BridgeError(RuntimeError):
    """The external reward process misbehaved."""

    def __init__(self, message: str, raw_line: str | None = None):
        self.raw_line = raw_line
        if raw_line is not None:
            message = f"{message} (raw line: {raw_line!r})"
        super().__init__(message)


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite cost or gradient."""

    def __init__(self, step: int, what: str = "cost"):
        self.step = step
        super().__init__(f"non-finite {what} at step {step}")


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


class ConfigError(InputError):
    """Experiment configuration is missing a field or refers to something unknown."""


class EquivalenceFailure(RuntimeError):
    """A result failed its shaping-equivalence certificate."""


class AcceptanceFailure(RuntimeError):
    """A demo finished but one of its checked properties does not hold."""
