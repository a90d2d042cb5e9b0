"""Exception types shared across the package."""

from __future__ import annotations


class NoSolutionError(ValueError):
    """An inverse problem has no physical solution for the given inputs."""


class UndefinedTemperatureRatioError(ValueError):
    """A dwell ratio of exactly 1 carries no temperature information."""


class ConfigError(ValueError):
    """Bad scenario configuration.  ``path`` names the offending key."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class TraceParseError(ValueError):
    """Malformed trace file.  ``line`` is the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class NumericalError(RuntimeError):
    """A numerical routine produced garbage or failed to converge."""


class SolverError(NumericalError):
    """Root find or field solve did not converge.  Carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class ResourceLimitError(RuntimeError):
    """A simulation would exceed its configured event or memory budget."""


class NoTelegraphDetected(RuntimeError):
    """The amplitude histogram does not resolve two separated levels."""
