"""Persistent observability service.

Ingests telemetry records from workflow clients, keeps binary artifacts in a
content-addressed blob store and answers record queries. Storage is an
append-only log per run plus an index rebuilt on startup; nothing is ever
mutated or deleted.
"""

from .blobstore import BlobStore  # noqa: F401
from .errors import (  # noqa: F401
    BlobCorruptionError,
    BlobNotFoundError,
    DigestMismatchError,
    RunStateError,
    StorageError,
    UnknownRunError,
)
from .service import ObservabilityService  # noqa: F401
from .settings import ServerSettings  # noqa: F401
from .store import IngestResult, RecordFilter, RecordStore, RunManifest, RunStatus  # noqa: F401

__all__ = [
    "BlobCorruptionError",
    "BlobNotFoundError",
    "BlobStore",
    "DigestMismatchError",
    "IngestResult",
    "ObservabilityService",
    "RecordFilter",
    "RecordStore",
    "RunManifest",
    "RunStateError",
    "RunStatus",
    "ServerSettings",
    "StorageError",
    "UnknownRunError",
]
