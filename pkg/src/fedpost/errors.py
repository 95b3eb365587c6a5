"""Exception types shared across the package."""

from __future__ import annotations


class FedpostError(Exception):
    """Base class for all package errors."""


class SingularUpdateError(FedpostError):
    """A Sherman-Morrison denominator fell inside the guard threshold.

    The incremental delta state is left unchanged when this is raised.
    """

    def __init__(self, message, client_index=None):
        super().__init__(message)
        self.client_index = client_index


class SingularMatrixError(FedpostError):
    """A dense linear solve hit a singular (or numerically singular) matrix."""


class DivergenceError(FedpostError):
    """An iterate or gradient became non-finite during optimization."""

    def __init__(self, message, step=None, client_index=None):
        super().__init__(message)
        self.step = step
        self.client_index = client_index


class ConfigError(FedpostError):
    """Invalid configuration file contents.

    ``line`` is the 1-based line number in the config file when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
