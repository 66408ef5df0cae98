"""Errors raised by the observability server."""

from __future__ import annotations


class UnknownRunError(LookupError):
    def __init__(self, run_id: str) -> None:
        super().__init__(f"unknown run '{run_id}'")
        self.run_id = run_id


class RunStateError(RuntimeError):
    """A run is not in a state that allows the requested operation."""


class BlobNotFoundError(LookupError):
    def __init__(self, digest: str) -> None:
        super().__init__(f"blob {digest} not found")
        self.digest = digest


class BlobCorruptionError(RuntimeError):
    """Stored bytes no longer hash to their address."""


class DigestMismatchError(ValueError):
    """Uploaded bytes do not hash to the digest they were sent under."""


class StorageError(RuntimeError):
    """Durable storage could not be written."""
