"""Content-addressed blob store on the local filesystem."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
from pathlib import Path
from threading import Lock
from typing import Tuple, Union

from qcsc_telemetry import BlobRef, digest
from qcsc_telemetry.blobs import OCTET_MEDIA_TYPE

from .errors import BlobCorruptionError, BlobNotFoundError, DigestMismatchError, StorageError

LOG = logging.getLogger(__name__)

_DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")


class BlobStore:
    """Immutable SHA-256 addressed objects under ``root/<aa>/<digest>``.

    Writes go to a temporary file in the target directory and are renamed into
    place, so concurrent puts of the same bytes leave exactly one object and
    readers never observe a partial blob. Every read re-hashes the bytes.
    """

    def __init__(self, root: Path) -> None:
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._lock = Lock()

    @property
    def root(self) -> Path:
        return self._root

    def path_for(self, blob_digest: str) -> Path:
        if not _DIGEST_RE.match(blob_digest or ""):
            raise ValueError(f"'{blob_digest}' is not a sha256 hex digest")
        return self._root / blob_digest[:2] / blob_digest

    def exists(self, blob_digest: str) -> bool:
        return self.path_for(blob_digest).exists()

    def put(self, data: bytes, media_type: str = OCTET_MEDIA_TYPE) -> Tuple[BlobRef, bool]:
        """Store ``data``; return its reference and whether a new object was written."""

        ref = digest(bytes(data), media_type)
        path = self.path_for(ref.digest)
        if path.exists():
            return ref, False

        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".incoming-")
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            raise StorageError(f"failed to write blob {ref.digest}: {exc}") from exc

        with self._lock:
            if path.exists():
                os.unlink(tmp_name)
                return ref, False
            os.replace(tmp_name, path)
        LOG.debug("stored blob %s (%d bytes)", ref.digest, ref.size_bytes)
        return ref, True

    def put_expected(
        self, blob_digest: str, data: bytes, media_type: str = OCTET_MEDIA_TYPE
    ) -> Tuple[BlobRef, bool]:
        actual = hashlib.sha256(data).hexdigest()
        if actual != blob_digest:
            raise DigestMismatchError(
                f"uploaded bytes hash to {actual}, not {blob_digest}"
            )
        return self.put(data, media_type)

    def get(self, ref: Union[BlobRef, str]) -> bytes:
        blob_digest = ref.digest if isinstance(ref, BlobRef) else ref
        path = self.path_for(blob_digest)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise BlobNotFoundError(blob_digest) from None
        if hashlib.sha256(data).hexdigest() != blob_digest:
            LOG.error("blob %s failed digest verification", blob_digest)
            raise BlobCorruptionError(f"blob {blob_digest} is corrupt")
        return data

    def count(self) -> int:
        return sum(
            1
            for entry in self._root.glob("*/*")
            if entry.is_file() and not entry.name.startswith(".incoming-")
        )
