"""Canonical byte encoding of telemetry records.

The encoding is compact JSON with sorted keys, ASCII-only output and a fixed
``YYYY-MM-DDTHH:MM:SS.ffffffZ`` timestamp, so equal records always produce
identical bytes regardless of payload insertion order. One encoded record never
contains a newline, which lets the spool, the server log and the ingest API
use newline-delimited streams of canonical records.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, Iterator, List

from .errors import RecordValidationError
from .records import BlobRef, TelemetryRecord

_FIELDS = {
    "blob_refs",
    "iteration",
    "kind",
    "level",
    "payload",
    "population",
    "record_id",
    "run_id",
    "task_name",
    "timestamp",
}


def format_timestamp(value: datetime) -> str:
    naive = value.astimezone(timezone.utc).replace(tzinfo=None)
    return naive.isoformat(timespec="microseconds") + "Z"


def parse_timestamp(value: str) -> datetime:
    if not isinstance(value, str) or not value.endswith("Z"):
        raise RecordValidationError(f"timestamp must be an ISO-8601 UTC string, got {value!r}")
    try:
        parsed = datetime.fromisoformat(value[:-1])
    except ValueError as exc:
        raise RecordValidationError(f"invalid timestamp {value!r}") from exc
    return parsed.replace(tzinfo=timezone.utc)


def record_to_dict(record: TelemetryRecord) -> Dict[str, Any]:
    return {
        "blob_refs": [ref.as_dict() for ref in record.blob_refs],
        "iteration": record.iteration,
        "kind": record.kind,
        "level": record.level.name,
        "payload": dict(record.payload),
        "population": record.population,
        "record_id": record.record_id,
        "run_id": record.run_id,
        "task_name": record.task_name,
        "timestamp": format_timestamp(record.timestamp),
    }


def record_from_dict(data: Any) -> TelemetryRecord:
    if not isinstance(data, dict):
        raise RecordValidationError("encoded record must be a JSON object")
    unknown = set(data) - _FIELDS
    if unknown:
        raise RecordValidationError(f"unknown record fields: {sorted(unknown)}")
    missing = {"record_id", "run_id", "task_name", "level", "kind", "timestamp"} - set(data)
    if missing:
        raise RecordValidationError(f"record missing fields: {sorted(missing)}")
    refs = data.get("blob_refs") or []
    if not isinstance(refs, list):
        raise RecordValidationError("blob_refs must be a list")
    payload = data.get("payload") or {}
    if not isinstance(payload, dict):
        raise RecordValidationError("payload must be an object")
    return TelemetryRecord(
        record_id=data["record_id"],
        run_id=data["run_id"],
        task_name=data["task_name"],
        level=data["level"],
        kind=data["kind"],
        timestamp=parse_timestamp(data["timestamp"]),
        iteration=data.get("iteration"),
        population=data.get("population"),
        payload=payload,
        blob_refs=tuple(BlobRef.from_dict(ref) for ref in refs),
    )


def canonical_encode(record: TelemetryRecord) -> bytes:
    """Return the deterministic byte encoding of ``record``."""

    text = json.dumps(
        record_to_dict(record),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=True,
        allow_nan=False,
    )
    return text.encode("ascii")


def canonical_decode(data: bytes) -> TelemetryRecord:
    """Inverse of :func:`canonical_encode`."""

    try:
        decoded = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RecordValidationError(f"record is not valid JSON: {exc}") from exc
    return record_from_dict(decoded)


def encode_lines(records: Iterable[TelemetryRecord]) -> bytes:
    """Newline-delimited canonical records, one trailing newline per record."""

    return b"".join(canonical_encode(record) + b"\n" for record in records)


def iter_lines(data: bytes) -> Iterator[bytes]:
    for line in data.split(b"\n"):
        if line.strip():
            yield line


def decode_lines(data: bytes) -> List[TelemetryRecord]:
    return [canonical_decode(line) for line in iter_lines(data)]


def canonical_json(value: Any) -> bytes:
    """Canonical JSON for non-record documents (run configs, manifests)."""

    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False
    ).encode("ascii")
