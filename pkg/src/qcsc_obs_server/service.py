"""Facade tying the record store and the blob store together."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

from qcsc_telemetry import BlobRef, TelemetryRecord
from qcsc_telemetry.blobs import CONFIG_MEDIA_TYPE

from .blobstore import BlobStore
from .errors import BlobNotFoundError
from .store import IngestResult, RecordFilter, RecordStore, RunManifest, RunStatus

LOG = logging.getLogger(__name__)


class ObservabilityService:
    """The persistent observability service behind the HTTP API.

    Everything the API exposes is available here as plain method calls, which
    is what the ETL pipeline and the tests use.
    """

    def __init__(self, data_dir: Path) -> None:
        self._data_dir = Path(data_dir)
        self._data_dir.mkdir(parents=True, exist_ok=True)
        self.blobs = BlobStore(self._data_dir / "blobs")
        self.records = RecordStore(self._data_dir)

    @property
    def data_dir(self) -> Path:
        return self._data_dir

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------
    def create_run(
        self,
        name: str,
        config_blob: bytes,
        *,
        run_id: Optional[str] = None,
        idempotency_key: Optional[str] = None,
    ) -> RunManifest:
        ref, _ = self.blobs.put(config_blob, CONFIG_MEDIA_TYPE)
        return self.records.create_run(
            name, ref, run_id=run_id, idempotency_key=idempotency_key
        )

    def register_run(
        self,
        name: str,
        config_digest: str,
        *,
        run_id: Optional[str] = None,
        idempotency_key: Optional[str] = None,
    ) -> RunManifest:
        """Create a run whose configuration blob was uploaded beforehand."""

        if not self.blobs.exists(config_digest):
            raise BlobNotFoundError(config_digest)
        size = self.blobs.path_for(config_digest).stat().st_size
        ref = BlobRef(config_digest, size, CONFIG_MEDIA_TYPE)
        return self.records.create_run(
            name, ref, run_id=run_id, idempotency_key=idempotency_key
        )

    def get_run(self, run_id: str) -> RunManifest:
        return self.records.get_run(run_id)

    def list_runs(self) -> List[RunManifest]:
        return self.records.list_runs()

    def finish_run(self, run_id: str, status: Union[RunStatus, str] = RunStatus.COMPLETED) -> RunManifest:
        return self.records.set_status(run_id, status)

    def run_config(self, run_id: str) -> bytes:
        return self.blobs.get(self.get_run(run_id).config_digest)

    # ------------------------------------------------------------------
    # Records and blobs
    # ------------------------------------------------------------------
    def ingest(
        self, run_id: str, batch: Iterable[Union[bytes, TelemetryRecord]]
    ) -> IngestResult:
        return self.records.ingest(run_id, batch)

    def query_records(
        self, run_id: str, record_filter: Optional[RecordFilter] = None
    ) -> List[TelemetryRecord]:
        return self.records.query(run_id, record_filter)

    def put_blob(self, data: bytes, media_type: str = "application/octet-stream") -> Tuple[BlobRef, bool]:
        return self.blobs.put(data, media_type)

    def get_blob(self, ref: Union[BlobRef, str]) -> bytes:
        return self.blobs.get(ref)
