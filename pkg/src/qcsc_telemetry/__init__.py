"""Shared telemetry vocabulary for the QCSC observability stack.

Everything that crosses a process boundary is defined here so the server,
the client library, the ETL pipeline and the workload agree on one format:

* the five-level telemetry taxonomy (:class:`TelemetryLevel`);
* the :class:`TelemetryRecord` schema and its canonical byte encoding, which
  is both the wire format of the ingest API and the line format of the
  client spool and the server record log;
* content addressing of binary artifacts (:func:`digest` / :class:`BlobRef`);
* the portable bitset container used for sampled and recovered bitstrings,
  and a small float-vector container for parameter and occupancy artifacts.

All types are immutable after construction and safe to share across threads.
"""

from .bitsets import (  # noqa: F401
    BITSET_MEDIA_TYPE,
    VECTOR_MEDIA_TYPE,
    BitstringSet,
    pack_bitstrings,
    pack_vector,
    unpack_bitstrings,
    unpack_vector,
)
from .blobs import CONFIG_MEDIA_TYPE, OCTET_MEDIA_TYPE, digest  # noqa: F401
from .canonical import canonical_decode, canonical_encode  # noqa: F401
from .errors import ContainerFormatError, RecordValidationError, TelemetryError  # noqa: F401
from .levels import TelemetryLevel  # noqa: F401
from .records import BlobRef, TelemetryRecord, new_record_id, new_run_id, utcnow  # noqa: F401

__all__ = [
    "BITSET_MEDIA_TYPE",
    "CONFIG_MEDIA_TYPE",
    "OCTET_MEDIA_TYPE",
    "VECTOR_MEDIA_TYPE",
    "BitstringSet",
    "BlobRef",
    "ContainerFormatError",
    "RecordValidationError",
    "TelemetryError",
    "TelemetryLevel",
    "TelemetryRecord",
    "canonical_decode",
    "canonical_encode",
    "digest",
    "new_record_id",
    "new_run_id",
    "pack_bitstrings",
    "pack_vector",
    "unpack_bitstrings",
    "unpack_vector",
    "utcnow",
]
