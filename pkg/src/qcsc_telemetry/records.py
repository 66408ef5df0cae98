"""Telemetry record schema.

A :class:`TelemetryRecord` is one timestamped observation bound to a run and a
task. Records are validated on construction, so an instance that exists is a
valid record; decoding untrusted bytes goes through
:func:`qcsc_telemetry.canonical.canonical_decode`, which raises
:class:`RecordValidationError` for anything that would not construct.
"""

from __future__ import annotations

import math
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from types import MappingProxyType
from typing import Mapping, Optional, Sequence, Tuple, Union

from .errors import RecordValidationError
from .levels import TelemetryLevel

Scalar = Union[str, int, float, bool, None]

_ID_RE = re.compile(r"^[0-9a-f]{32}$")
_DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")

ARTIFACT_KIND = "sqd_artifact"
TASK_TIMING_KIND = "task_timing"
QPU_JOB_KIND = "qpu_job"
HPC_JOB_KIND = "hpc_job"

# L4 events of the SQD workload
PROBLEM_KIND = "sqd_problem"
SAMPLER_STATS_KIND = "sampler_stats"
RESULT_KIND = "sqd_result"
SELECTION_KIND = "de_selection"


def new_run_id() -> str:
    """Return a fresh 128-bit run identifier as 32 lowercase hex digits."""

    return uuid.uuid4().hex


def new_record_id() -> str:
    return uuid.uuid4().hex


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class BlobRef:
    """Content address of an immutable binary artifact."""

    digest: str
    size_bytes: int
    media_type: str = "application/octet-stream"

    def __post_init__(self) -> None:
        if not isinstance(self.digest, str) or not _DIGEST_RE.match(self.digest):
            raise RecordValidationError(
                f"blob digest must be 64 lowercase hex digits, got {self.digest!r}"
            )
        if isinstance(self.size_bytes, bool) or not isinstance(self.size_bytes, int):
            raise RecordValidationError("blob size_bytes must be an integer")
        if self.size_bytes < 0:
            raise RecordValidationError("blob size_bytes must be non-negative")
        if not isinstance(self.media_type, str) or not self.media_type:
            raise RecordValidationError("blob media_type must be a non-empty string")

    def as_dict(self) -> dict:
        return {
            "digest": self.digest,
            "media_type": self.media_type,
            "size_bytes": self.size_bytes,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "BlobRef":
        try:
            return cls(
                digest=data["digest"],  # type: ignore[arg-type]
                size_bytes=data["size_bytes"],  # type: ignore[arg-type]
                media_type=data.get("media_type", "application/octet-stream"),  # type: ignore[arg-type]
            )
        except KeyError as exc:
            raise RecordValidationError(f"blob reference missing {exc}") from exc


def _check_optional_index(name: str, value: Optional[int]) -> None:
    if value is None:
        return
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise RecordValidationError(f"{name} must be a non-negative integer or null")


def _check_payload(payload: Mapping[str, Scalar]) -> None:
    for key, value in payload.items():
        if not isinstance(key, str) or not key:
            raise RecordValidationError(f"payload keys must be non-empty strings, got {key!r}")
        if value is None or isinstance(value, (str, bool, int)):
            continue
        if isinstance(value, float):
            if not math.isfinite(value):
                raise RecordValidationError(f"payload value for '{key}' is not finite")
            continue
        raise RecordValidationError(
            f"payload value for '{key}' must be a scalar, got {type(value).__name__}"
        )


@dataclass(frozen=True)
class TelemetryRecord:
    """One observation at a telemetry level, bound to a run and a task.

    Attributes
    ----------
    record_id:
        Client generated 128-bit id; the server deduplicates on it.
    iteration / population:
        DE generation ``g`` and population index ``i`` when the observation
        belongs to one.
    payload:
        Flat key to scalar map. Stored read-only.
    blob_refs:
        Binary artifacts this record points at.
    """

    record_id: str
    run_id: str
    task_name: str
    level: TelemetryLevel
    kind: str
    timestamp: datetime
    iteration: Optional[int] = None
    population: Optional[int] = None
    payload: Mapping[str, Scalar] = field(default_factory=dict)
    blob_refs: Tuple[BlobRef, ...] = ()

    def __post_init__(self) -> None:
        for name in ("record_id", "run_id"):
            value = getattr(self, name)
            if not isinstance(value, str) or not _ID_RE.match(value):
                raise RecordValidationError(
                    f"{name} must be 32 lowercase hex digits, got {value!r}"
                )
        if not isinstance(self.task_name, str) or not self.task_name:
            raise RecordValidationError("task_name must be a non-empty string")
        if not isinstance(self.kind, str) or not self.kind:
            raise RecordValidationError("kind must be a non-empty string")
        try:
            level = TelemetryLevel.parse(self.level)
        except ValueError as exc:
            raise RecordValidationError(str(exc)) from exc
        object.__setattr__(self, "level", level)

        if not isinstance(self.timestamp, datetime) or self.timestamp.tzinfo is None:
            raise RecordValidationError("timestamp must be a timezone-aware datetime")
        object.__setattr__(self, "timestamp", self.timestamp.astimezone(timezone.utc))

        _check_optional_index("iteration", self.iteration)
        _check_optional_index("population", self.population)

        if not isinstance(self.payload, Mapping):
            raise RecordValidationError("payload must be a mapping")
        _check_payload(self.payload)
        object.__setattr__(self, "payload", MappingProxyType(dict(self.payload)))

        refs: Sequence[BlobRef] = self.blob_refs or ()
        if not all(isinstance(ref, BlobRef) for ref in refs):
            raise RecordValidationError("blob_refs must contain BlobRef instances")
        object.__setattr__(self, "blob_refs", tuple(refs))

        if (
            self.level is TelemetryLevel.L4
            and self.kind == ARTIFACT_KIND
            and not self.blob_refs
            and not self.payload
        ):
            raise RecordValidationError(
                "sqd_artifact records need at least one blob reference or a payload"
            )

    @property
    def sort_key(self) -> Tuple[datetime, str]:
        return self.timestamp, self.record_id
