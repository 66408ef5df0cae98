"""ETL pipeline: stored raw telemetry to per-run metric tables.

Output layout::

    <out_dir>/<run_id>/<metric>.v<version>.tsv
    <out_dir>/<run_id>/.lock

Tables are pure functions of the stored records, blobs and definition
version, so re-running the pipeline rewrites byte-identical files.
"""

from __future__ import annotations

import fcntl
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Sequence

from qcsc_obs_server.errors import RunStateError
from qcsc_obs_server.service import ObservabilityService
from qcsc_obs_server.store import RunStatus

from .definitions import MetricDefinition
from .errors import PipelineLockedError
from .extract import RunData
from .table import MetricTable

LOG = logging.getLogger(__name__)


class EtlPipeline:
    """Run metric definitions over completed runs of one service."""

    def __init__(
        self,
        service: ObservabilityService,
        out_dir: Path,
        *,
        max_workers: Optional[int] = None,
    ) -> None:
        self._service = service
        self._out_dir = Path(out_dir)
        self._max_workers = max_workers

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    def run_directory(self, run_id: str) -> Path:
        return self._out_dir / run_id

    @contextmanager
    def _locked(self, run_id: str) -> Iterator[None]:
        directory = self.run_directory(run_id)
        directory.mkdir(parents=True, exist_ok=True)
        fd = os.open(directory / ".lock", os.O_RDWR | os.O_CREAT, 0o644)
        try:
            try:
                fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except BlockingIOError as exc:
                raise PipelineLockedError(run_id) from exc
            try:
                yield
            finally:
                fcntl.flock(fd, fcntl.LOCK_UN)
        finally:
            os.close(fd)

    def run_pipeline(
        self, run_id: str, definitions: Sequence[MetricDefinition]
    ) -> List[MetricTable]:
        """Compute and write one table per definition; returns them sorted by key."""

        manifest = self._service.get_run(run_id)
        if manifest.status is not RunStatus.COMPLETED:
            raise RunStateError(
                f"run {run_id} is {manifest.status.value}; the pipeline needs a completed run"
            )
        with self._locked(run_id):
            data = RunData.load(self._service, run_id)
            with ThreadPoolExecutor(max_workers=self._max_workers) as pool:
                tables = list(pool.map(lambda definition: self._compute(definition, data), definitions))
            directory = self.run_directory(run_id)
            for table in tables:
                path = table.write(directory)
                LOG.debug("wrote %s (%d rows)", path, len(table.rows))
        tables.sort(key=lambda table: table.key)
        LOG.info(
            "ETL for run %s wrote %d table(s) to %s", run_id, len(tables), self.run_directory(run_id)
        )
        return tables

    @staticmethod
    def _compute(definition: MetricDefinition, data: RunData) -> MetricTable:
        rows = definition.compute(data)
        nulls = sum(1 for row in rows if row.value is None)
        if nulls:
            LOG.info("%s: %d of %d row(s) are null", definition.key, nulls, len(rows))
        return MetricTable(definition.name, definition.version, rows)

    def load_tables(self, run_id: str) -> List[MetricTable]:
        """Tables already written for ``run_id``."""

        directory = self.run_directory(run_id)
        if not directory.is_dir():
            return []
        return [MetricTable.read(path) for path in sorted(directory.glob("*.tsv"))]
