"""Client-side errors. None of these ever reach workload code."""

from __future__ import annotations

from typing import Optional


class TransportError(RuntimeError):
    """The observability server could not be reached or refused a request."""

    def __init__(self, message: str, status_code: Optional[int] = None) -> None:
        super().__init__(message)
        self.status_code = status_code
