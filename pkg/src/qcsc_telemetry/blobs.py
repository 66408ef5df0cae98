"""Content addressing for binary artifacts."""

from __future__ import annotations

import hashlib

from .records import BlobRef

OCTET_MEDIA_TYPE = "application/octet-stream"
CONFIG_MEDIA_TYPE = "application/json"


def digest(blob: bytes, media_type: str = OCTET_MEDIA_TYPE) -> BlobRef:
    """Return the SHA-256 content address of ``blob``."""

    return BlobRef(
        digest=hashlib.sha256(blob).hexdigest(),
        size_bytes=len(blob),
        media_type=media_type,
    )
