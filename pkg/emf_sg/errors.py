"""
Exception types raised by the numerical engines and the config loader.
"""
from typing import Optional


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConvergenceError(RuntimeError):
    """A quadrature or series did not reach the requested tolerance."""

    def __init__(self, message: str, partial=None, achieved: Optional[float] = None):
        super().__init__(message)
        self.partial = partial
        self.achieved = achieved


class ConfigError(ValueError):
    """Invalid configuration file or parameter set."""

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, field: Optional[str] = None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.field = field

    def __str__(self) -> str:
        where = []
        if self.path:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.field:
            where.append(f"field '{self.field}'")
        prefix = ":".join(where)
        msg = super().__str__()
        return f"{prefix}: {msg}" if prefix else msg
