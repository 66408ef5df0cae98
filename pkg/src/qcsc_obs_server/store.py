"""Append-only record store with an in-memory secondary index.

Layout under the data directory::

    runs.log               one JSON manifest snapshot per line; last one wins
    records/<run_id>.log   newline-delimited canonical records

The index is rebuilt from the logs on startup. Appends are serialized per run
and fsynced before they become visible to queries, so an acknowledged ingest
survives a restart.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from threading import Lock
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from qcsc_telemetry import BlobRef, RecordValidationError, TelemetryLevel, TelemetryRecord
from qcsc_telemetry.canonical import (
    canonical_decode,
    canonical_encode,
    canonical_json,
    format_timestamp,
    parse_timestamp,
)
from qcsc_telemetry.records import new_run_id, utcnow

from .errors import RunStateError, StorageError, UnknownRunError

LOG = logging.getLogger(__name__)

_RUN_ID_RE = re.compile(r"^[0-9a-f]{32}$")

IndexKey = Tuple[TelemetryLevel, str, Optional[int], Optional[int]]


class RunStatus(str, Enum):
    ACTIVE = "active"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    name: str
    created_at: datetime
    config_digest: BlobRef
    status: RunStatus = RunStatus.ACTIVE
    idempotency_key: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "config_digest": self.config_digest.as_dict(),
            "created_at": format_timestamp(self.created_at),
            "idempotency_key": self.idempotency_key,
            "name": self.name,
            "run_id": self.run_id,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(
            run_id=data["run_id"],
            name=data["name"],
            created_at=parse_timestamp(data["created_at"]),
            config_digest=BlobRef.from_dict(data["config_digest"]),
            status=RunStatus(data["status"]),
            idempotency_key=data.get("idempotency_key"),
        )


@dataclass(frozen=True)
class RecordFilter:
    """Conjunction of optional field filters; ``since``/``until`` are inclusive."""

    level: Optional[TelemetryLevel] = None
    kind: Optional[str] = None
    iteration: Optional[int] = None
    population: Optional[int] = None
    since: Optional[datetime] = None
    until: Optional[datetime] = None

    def matches_key(self, key: IndexKey) -> bool:
        level, kind, iteration, population = key
        return (
            (self.level is None or level == self.level)
            and (self.kind is None or kind == self.kind)
            and (self.iteration is None or iteration == self.iteration)
            and (self.population is None or population == self.population)
        )

    def matches(self, record: TelemetryRecord) -> bool:
        if not self.matches_key(_index_key(record)):
            return False
        if self.since is not None and record.timestamp < self.since:
            return False
        if self.until is not None and record.timestamp > self.until:
            return False
        return True


@dataclass(frozen=True)
class IngestError:
    line: int
    record_id: Optional[str]
    reason: str

    def as_dict(self) -> dict:
        return {"line": self.line, "reason": self.reason, "record_id": self.record_id}


@dataclass
class IngestResult:
    accepted: int = 0
    duplicates: int = 0
    errors: List[IngestError] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "duplicates": self.duplicates,
            "errors": [error.as_dict() for error in self.errors],
        }


def _index_key(record: TelemetryRecord) -> IndexKey:
    return record.level, record.kind, record.iteration, record.population


def _guess_record_id(line: bytes) -> Optional[str]:
    try:
        data = json.loads(line)
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    if isinstance(data, dict) and isinstance(data.get("record_id"), str):
        return data["record_id"]
    return None


@dataclass
class _RunState:
    manifest: RunManifest
    records: List[TelemetryRecord] = field(default_factory=list)
    index: Dict[IndexKey, List[int]] = field(default_factory=dict)
    lock: Lock = field(default_factory=Lock)

    def publish(self, record: TelemetryRecord) -> None:
        self.records.append(record)
        self.index.setdefault(_index_key(record), []).append(len(self.records) - 1)


class RecordStore:
    """Durable run registry and telemetry record log."""

    def __init__(self, data_dir: Path) -> None:
        self._data_dir = Path(data_dir)
        self._records_dir = self._data_dir / "records"
        self._records_dir.mkdir(parents=True, exist_ok=True)
        self._runs_log = self._data_dir / "runs.log"
        self._runs: Dict[str, _RunState] = {}
        self._keys: Dict[str, str] = {}
        self._record_ids: Set[str] = set()
        self._registry_lock = Lock()
        self._load()

    # ------------------------------------------------------------------
    # Startup
    # ------------------------------------------------------------------
    def _load(self) -> None:
        if self._runs_log.exists():
            for line in self._read_lines(self._runs_log):
                try:
                    manifest = RunManifest.from_dict(json.loads(line))
                except (KeyError, ValueError, RecordValidationError) as exc:
                    LOG.warning("skipping unreadable run manifest line: %s", exc)
                    continue
                state = self._runs.get(manifest.run_id)
                if state is None:
                    self._runs[manifest.run_id] = _RunState(manifest)
                else:
                    state.manifest = manifest
                if manifest.idempotency_key:
                    self._keys[manifest.idempotency_key] = manifest.run_id

        for run_id, state in self._runs.items():
            path = self._record_path(run_id)
            if not path.exists():
                continue
            for line in self._read_lines(path):
                try:
                    record = canonical_decode(line)
                except RecordValidationError as exc:
                    LOG.warning("skipping unreadable record in %s: %s", path, exc)
                    continue
                if record.record_id in self._record_ids:
                    continue
                self._record_ids.add(record.record_id)
                state.publish(record)
        LOG.info(
            "record store opened at %s: %d run(s), %d record(s)",
            self._data_dir,
            len(self._runs),
            len(self._record_ids),
        )

    @staticmethod
    def _read_lines(path: Path) -> Iterable[bytes]:
        data = path.read_bytes()
        lines = data.split(b"\n")
        # a crash mid-append leaves an unterminated tail that was never acknowledged
        if lines and lines[-1]:
            LOG.warning("ignoring unterminated tail of %s", path)
        return [line for line in lines[:-1] if line.strip()]

    def _record_path(self, run_id: str) -> Path:
        return self._records_dir / f"{run_id}.log"

    @staticmethod
    def _append(path: Path, data: bytes) -> None:
        try:
            with path.open("ab") as handle:
                handle.write(data)
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            raise StorageError(f"failed to append to {path}: {exc}") from exc

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------
    def create_run(
        self,
        name: str,
        config_digest: BlobRef,
        *,
        run_id: Optional[str] = None,
        idempotency_key: Optional[str] = None,
    ) -> RunManifest:
        if run_id is not None and not _RUN_ID_RE.match(run_id):
            raise ValueError(f"'{run_id}' is not a 32-digit lowercase hex run id")
        with self._registry_lock:
            if idempotency_key and idempotency_key in self._keys:
                return self._runs[self._keys[idempotency_key]].manifest
            if run_id and run_id in self._runs:
                return self._runs[run_id].manifest
            manifest = RunManifest(
                run_id=run_id or new_run_id(),
                name=name,
                created_at=utcnow(),
                config_digest=config_digest,
                idempotency_key=idempotency_key,
            )
            self._append(self._runs_log, canonical_json(manifest.as_dict()) + b"\n")
            self._runs[manifest.run_id] = _RunState(manifest)
            if idempotency_key:
                self._keys[idempotency_key] = manifest.run_id
        LOG.info("created run %s (%s)", manifest.run_id, name)
        return manifest

    def get_run(self, run_id: str) -> RunManifest:
        return self._state(run_id).manifest

    def list_runs(self) -> List[RunManifest]:
        return sorted(
            (state.manifest for state in list(self._runs.values())),
            key=lambda manifest: (manifest.created_at, manifest.run_id),
        )

    def set_status(self, run_id: str, status: Union[RunStatus, str]) -> RunManifest:
        status = RunStatus(status)
        state = self._state(run_id)
        with self._registry_lock:
            current = state.manifest.status
            if current == status:
                return state.manifest
            if current is not RunStatus.ACTIVE or status is RunStatus.ACTIVE:
                raise RunStateError(
                    f"run {run_id} cannot move from {current.value} to {status.value}"
                )
            manifest = replace(state.manifest, status=status)
            self._append(self._runs_log, canonical_json(manifest.as_dict()) + b"\n")
            state.manifest = manifest
        LOG.info("run %s is now %s", run_id, status.value)
        return manifest

    def _state(self, run_id: str) -> _RunState:
        state = self._runs.get(run_id)
        if state is None:
            raise UnknownRunError(run_id)
        return state

    # ------------------------------------------------------------------
    # Records
    # ------------------------------------------------------------------
    def ingest(
        self, run_id: str, batch: Iterable[Union[bytes, TelemetryRecord]]
    ) -> IngestResult:
        """Append each valid, unseen record exactly once.

        Invalid entries are reported individually and do not affect the rest of
        the batch.
        """

        state = self._state(run_id)
        if state.manifest.status is not RunStatus.ACTIVE:
            raise RunStateError(f"run {run_id} is {state.manifest.status.value}")

        result = IngestResult()
        candidates: List[TelemetryRecord] = []
        for line_no, item in enumerate(batch, start=1):
            if isinstance(item, TelemetryRecord):
                record = item
            else:
                try:
                    record = canonical_decode(item)
                except RecordValidationError as exc:
                    result.errors.append(IngestError(line_no, _guess_record_id(item), str(exc)))
                    continue
            if record.run_id != run_id:
                result.errors.append(
                    IngestError(line_no, record.record_id, f"record belongs to run {record.run_id}")
                )
                continue
            candidates.append(record)

        with state.lock:
            fresh: List[TelemetryRecord] = []
            seen: Set[str] = set()
            for record in candidates:
                if record.record_id in self._record_ids or record.record_id in seen:
                    result.duplicates += 1
                    continue
                seen.add(record.record_id)
                fresh.append(record)
            if fresh:
                self._append(
                    self._record_path(run_id),
                    b"".join(canonical_encode(record) + b"\n" for record in fresh),
                )
                for record in fresh:
                    self._record_ids.add(record.record_id)
                    state.publish(record)
            result.accepted = len(fresh)

        LOG.debug(
            "ingested run=%s accepted=%d duplicates=%d errors=%d",
            run_id,
            result.accepted,
            result.duplicates,
            len(result.errors),
        )
        return result

    def query(self, run_id: str, record_filter: Optional[RecordFilter] = None) -> List[TelemetryRecord]:
        """Records of ``run_id`` matching every supplied filter field."""

        state = self._state(run_id)
        record_filter = record_filter or RecordFilter()
        records = state.records
        size = len(records)
        positions: List[int] = []
        for key, slots in list(state.index.items()):
            if record_filter.matches_key(key):
                positions.extend(slot for slot in list(slots) if slot < size)
        selected = [records[slot] for slot in positions]
        if record_filter.since is not None or record_filter.until is not None:
            selected = [record for record in selected if record_filter.matches(record)]
        return sorted(selected, key=lambda record: record.sort_key)

    def export(self, run_id: str) -> List[TelemetryRecord]:
        return self.query(run_id, RecordFilter())

    def count(self, run_id: str) -> int:
        return len(self._state(run_id).records)

    def record_ids(self, run_id: str) -> Sequence[str]:
        return [record.record_id for record in self._state(run_id).records]
