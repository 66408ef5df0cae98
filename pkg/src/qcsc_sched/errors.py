"""Scheduler simulation errors."""

from __future__ import annotations


class QuotaExceededError(RuntimeError):
    """A job would consume more of an allocation than is left."""

    def __init__(self, resource: str, requested: float, remaining: float) -> None:
        super().__init__(
            f"{resource} quota exhausted: job needs {requested:.3f}, {remaining:.3f} remaining"
        )
        self.resource = resource
        self.requested = requested
        self.remaining = remaining


class IncompleteJobError(ValueError):
    """A job record is missing the fields of a finished job."""
