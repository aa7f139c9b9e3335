"""
Exceptions raised by the solver core.

Configuration-type errors also derive from ValueError so callers that only
know about bad input can keep catching that.
"""

from typing import Any, Dict, Optional


class SolverError(Exception):
    """Base class for every error raised by the solver."""


class InvalidDatumError(SolverError, ValueError):
    """Raised when an initial datum is malformed or has non-finite energy."""


class GridTooSmallError(SolverError, ValueError):
    """Raised when a grid has fewer nodes than the solver supports."""


class OutOfRangeError(SolverError, ValueError):
    """Raised when a sampled quantity is queried outside its domain."""


class TransformError(SolverError, RuntimeError):
    """Raised when the xi transform cannot be inverted."""


class OrderViolationError(SolverError, RuntimeError):
    """Raised when Lagrangian positions lose their ordering."""


class InsufficientDataError(SolverError, ValueError):
    """Raised when a trajectory is too short to validate."""


class TrajectoryIOError(SolverError, OSError):
    """Raised when a trajectory directory is missing or corrupt."""


class StepFailureError(SolverError, RuntimeError):
    """Raised when a time step cannot be completed."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
