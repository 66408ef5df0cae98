"""Run handles: the instrumentation surface the workload talks to.

Nothing in here raises into the workload. Emission only encodes a record and
puts it on a bounded queue; when the queue is full the record goes straight to
the on-disk spool. A background :class:`~qcsc_obs_client.flusher.SpoolFlusher`
moves queued records to the spool and delivers the spool to the server.
"""

from __future__ import annotations

import logging
import queue
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from threading import Event, Lock
from typing import Any, Callable, Dict, Iterator, Mapping, Optional, Sequence, Tuple, TypeVar, Union

import httpx
import numpy as np

from qcsc_telemetry import (
    BITSET_MEDIA_TYPE,
    CONFIG_MEDIA_TYPE,
    VECTOR_MEDIA_TYPE,
    BitstringSet,
    BlobRef,
    RecordValidationError,
    TelemetryLevel,
    TelemetryRecord,
    canonical_encode,
    digest,
    new_record_id,
    new_run_id,
    pack_bitstrings,
    pack_vector,
    utcnow,
)
from qcsc_telemetry.canonical import canonical_json, format_timestamp
from qcsc_telemetry.records import ARTIFACT_KIND, HPC_JOB_KIND, QPU_JOB_KIND, TASK_TIMING_KIND

from .flusher import DeliveryReport, SpoolFlusher, deliver_spool
from .spool import Spool
from .transport import ObsTransport

LOG = logging.getLogger(__name__)

T = TypeVar("T")

ARTIFACT_NAMES = frozenset(
    {
        "ucj_parameter",
        "raw_bitstrings",
        "recovered_bitstrings",
        "alphadets",
        "avg_occupancy",
        "carryover",
    }
)

REQUIRED_JOB_KEYS: Dict[str, Tuple[str, ...]] = {
    QPU_JOB_KIND: ("job_id", "created_at", "started_at", "ended_at", "usage_s", "shots"),
    HPC_JOB_KIND: (
        "job_id",
        "etime",
        "stime",
        "walltime",
        "resources_used.vmem",
        "resources_used.cpupercent",
    ),
}


@dataclass
class ClientSettings:
    endpoint: str = "http://127.0.0.1:8700"
    token: Optional[str] = None
    spool_dir: Path = Path(".qcsc-spool")
    queue_bound: int = 1024
    flush_interval: float = 1.0
    batch_size: int = 256
    enabled: bool = True
    timeout: float = 5.0


@dataclass
class TaskSpan:
    """Lifecycle of one task execution; emitted as an L3 ``task_timing`` record."""

    task_name: str
    attempt: int
    iteration: Optional[int] = None
    population: Optional[int] = None
    started_at: Optional[datetime] = None
    ended_at: Optional[datetime] = None
    outcome: Optional[str] = None
    annotations: Dict[str, Any] = field(default_factory=dict)
    _clock: float = 0.0

    def start(self) -> None:
        self.started_at = utcnow()
        self._clock = time.perf_counter()

    def finish(self, outcome: str) -> None:
        elapsed = max(0.0, time.perf_counter() - self._clock)
        # derive the end from the monotonic clock so ended_at >= started_at holds
        self.ended_at = self.started_at + timedelta(seconds=elapsed)
        self.outcome = outcome

    def annotate(self, **values: Any) -> None:
        """Attach extra scalar payload, e.g. the simulated job time."""

        self.annotations.update(values)

    @property
    def wall_clock_s(self) -> float:
        if self.started_at is None or self.ended_at is None:
            return 0.0
        return (self.ended_at - self.started_at).total_seconds()

    def payload(self) -> Dict[str, Any]:
        data: Dict[str, Any] = dict(self.annotations)
        data.update(
            {
                "attempt": self.attempt,
                "outcome": self.outcome,
                "started_at": format_timestamp(self.started_at),
                "ended_at": format_timestamp(self.ended_at),
                "wall_clock_s": self.wall_clock_s,
            }
        )
        return data


class RunHandle:
    """Telemetry sink bound to one workflow run."""

    def __init__(
        self,
        run_id: str,
        name: str,
        settings: ClientSettings,
        spool: Optional[Spool] = None,
        transport: Optional[ObsTransport] = None,
    ) -> None:
        self.run_id = run_id
        self.name = name
        self._settings = settings
        self._spool = spool
        self._transport = transport
        self._enabled = settings.enabled and spool is not None and transport is not None
        self._queue: "queue.Queue[bytes]" = queue.Queue(maxsize=max(1, settings.queue_bound))
        self._lock = Lock()
        self._attempts: Dict[str, int] = {}
        self._last_stamp: Dict[str, datetime] = {}
        self._emitted = 0
        self._stop_event = Event()
        self._flusher: Optional[SpoolFlusher] = None
        self._closed = False

    @property
    def enabled(self) -> bool:
        return self._enabled

    @property
    def emitted(self) -> int:
        """Records accepted locally (queued or spooled) since the run started."""

        return self._emitted

    @property
    def spool(self) -> Optional[Spool]:
        return self._spool

    def start_flusher(self) -> None:
        if not self._enabled or self._flusher is not None:
            return
        self._flusher = SpoolFlusher(
            spool=self._spool,
            transport=self._transport,
            pending=self._queue,
            interval=self._settings.flush_interval,
            stop_event=self._stop_event,
            batch_size=self._settings.batch_size,
        )
        self._flusher.start()

    # ------------------------------------------------------------------
    # Emission
    # ------------------------------------------------------------------
    def _stamp(self, task_name: str, at: Optional[datetime] = None) -> datetime:
        with self._lock:
            stamp = at or utcnow()
            previous = self._last_stamp.get(task_name)
            if previous is not None and stamp < previous:
                stamp = previous
            self._last_stamp[task_name] = stamp
            return stamp

    def _next_attempt(self, task_name: str) -> int:
        with self._lock:
            attempt = self._attempts.get(task_name, 0)
            self._attempts[task_name] = attempt + 1
            return attempt

    def emit(
        self,
        level: Union[TelemetryLevel, str, int],
        kind: str,
        payload: Optional[Mapping[str, Any]] = None,
        *,
        task_name: str = "workflow",
        iteration: Optional[int] = None,
        population: Optional[int] = None,
        blob_refs: Sequence[BlobRef] = (),
        timestamp: Optional[datetime] = None,
    ) -> Optional[TelemetryRecord]:
        """Build and enqueue one record. Returns None when nothing was recorded."""

        if not self._enabled or self._closed:
            return None
        try:
            record = TelemetryRecord(
                record_id=new_record_id(),
                run_id=self.run_id,
                task_name=task_name,
                level=level,
                kind=kind,
                timestamp=self._stamp(task_name, timestamp),
                iteration=iteration,
                population=population,
                payload=dict(payload or {}),
                blob_refs=tuple(blob_refs),
            )
        except RecordValidationError as exc:
            LOG.warning("dropping invalid %s record from task %s: %s", kind, task_name, exc)
            return None
        try:
            accepted = self._enqueue(canonical_encode(record))
        except Exception:
            LOG.exception("failed to spool %s record for run %s", kind, self.run_id)
            return None
        if not accepted:
            LOG.warning("dropping %s record from task %s: run %s is closed", kind, task_name, self.run_id)
            return None
        return record

    def _enqueue(self, line: bytes) -> bool:
        # queued under the handle lock so nothing lands after the final drain
        with self._lock:
            if self._closed:
                return False
            self._emitted += 1
            try:
                self._queue.put_nowait(line)
                return True
            except queue.Full:
                LOG.debug("telemetry queue full, writing through to spool")
                self._spool.append_from_queue(self._queue, extra=line)
        if self._flusher is not None:
            self._flusher.wake()
        return True

    # ------------------------------------------------------------------
    # L3 task spans
    # ------------------------------------------------------------------
    @contextmanager
    def span(
        self,
        task_name: str,
        *,
        iteration: Optional[int] = None,
        population: Optional[int] = None,
    ) -> Iterator[TaskSpan]:
        span = TaskSpan(
            task_name,
            self._next_attempt(task_name),
            iteration=iteration,
            population=population,
        )
        span.start()
        try:
            yield span
        except BaseException:
            span.finish("failed")
            self._emit_span(span)
            raise
        span.finish("ok")
        self._emit_span(span)

    def _emit_span(self, span: TaskSpan) -> None:
        self.emit(
            TelemetryLevel.L3,
            TASK_TIMING_KIND,
            span.payload(),
            task_name=span.task_name,
            iteration=span.iteration,
            population=span.population,
            timestamp=span.ended_at,
        )

    def record_task(
        self,
        task_name: str,
        body: Callable[..., T],
        *args: Any,
        iteration: Optional[int] = None,
        population: Optional[int] = None,
        **kwargs: Any,
    ) -> T:
        """Run ``body`` once inside a span and return its result unchanged."""

        with self.span(task_name, iteration=iteration, population=population):
            return body(*args, **kwargs)

    # ------------------------------------------------------------------
    # L2 job tables
    # ------------------------------------------------------------------
    def log_job_table(
        self,
        kind: str,
        row: Mapping[str, Any],
        *,
        task_name: str = "workflow",
        iteration: Optional[int] = None,
        population: Optional[int] = None,
    ) -> bool:
        required = REQUIRED_JOB_KEYS.get(kind)
        if required is None:
            LOG.warning("rejecting job row of unknown kind %r", kind)
            return False
        missing = [key for key in required if key not in row]
        if missing:
            LOG.warning(
                "rejecting %s row %s: missing %s", kind, row.get("job_id"), ", ".join(missing)
            )
            return False
        record = self.emit(
            TelemetryLevel.L2,
            kind,
            row,
            task_name=task_name,
            iteration=iteration,
            population=population,
        )
        return record is not None or not self._enabled

    # ------------------------------------------------------------------
    # L4 artifacts
    # ------------------------------------------------------------------
    def put_artifact(
        self,
        name: str,
        iteration: Optional[int],
        population: Optional[int],
        value: Union[BitstringSet, Sequence[float], np.ndarray],
        *,
        task_name: str = "workflow",
    ) -> Optional[BlobRef]:
        if name not in ARTIFACT_NAMES:
            LOG.warning("ignoring unknown artifact name %r", name)
            return None
        try:
            if isinstance(value, BitstringSet):
                data = pack_bitstrings(value)
                ref = digest(data, BITSET_MEDIA_TYPE)
                payload: Dict[str, Any] = {
                    "artifact": name,
                    "num_bits": value.num_bits,
                    "rows": len(value),
                }
            else:
                data = pack_vector(value)
                ref = digest(data, VECTOR_MEDIA_TYPE)
                payload = {"artifact": name, "length": int(np.asarray(value).size)}
        except Exception:
            LOG.exception("failed to encode artifact %s", name)
            return None
        if not self._enabled:
            return ref
        try:
            self._spool.stage_blob(ref.digest, data)
        except OSError as exc:
            LOG.warning("failed to stage artifact %s (%s): %s", name, ref.digest, exc)
            return ref
        self.emit(
            TelemetryLevel.L4,
            ARTIFACT_KIND,
            payload,
            task_name=task_name,
            iteration=iteration,
            population=population,
            blob_refs=(ref,),
        )
        return ref

    def emit_event(
        self,
        kind: str,
        payload: Mapping[str, Any],
        *,
        level: Union[TelemetryLevel, str, int] = TelemetryLevel.L4,
        task_name: str = "workflow",
        iteration: Optional[int] = None,
        population: Optional[int] = None,
    ) -> Optional[TelemetryRecord]:
        return self.emit(
            level,
            kind,
            payload,
            task_name=task_name,
            iteration=iteration,
            population=population,
        )

    # ------------------------------------------------------------------
    # Delivery
    # ------------------------------------------------------------------
    def flush(self) -> DeliveryReport:
        """Deliver everything emitted so far, synchronously."""

        if not self._enabled:
            return DeliveryReport()
        return self._deliver(final=False)

    def replay_spool(self) -> DeliveryReport:
        return self.flush()

    def _deliver(self, final: bool) -> DeliveryReport:
        try:
            if self._flusher is not None:
                return self._flusher.poll(final=final)
            self._spool.append_from_queue(self._queue)
            return deliver_spool(
                self._spool, self._transport, self._settings.batch_size, final=final
            )
        except Exception as exc:
            LOG.exception("flush of run %s failed", self.run_id)
            return DeliveryReport(backlog=self._safe_backlog(), error=str(exc))

    def _safe_backlog(self) -> int:
        try:
            return self._spool.backlog()
        except OSError:
            return -1

    def finish(self, status: str = "completed") -> DeliveryReport:
        """Mark the run finished and make a final delivery attempt.

        Emission is closed and the queue drained into the spool before the
        status change is queued, so the server only sees the status after the
        last record.
        """

        if not self._enabled or not self._shut_down():
            return DeliveryReport()
        try:
            self._spool.add_control({"op": "set_status", "run_id": self.run_id, "status": status})
        except OSError as exc:
            LOG.warning("could not queue status change for run %s: %s", self.run_id, exc)
        report = self._deliver(final=True)
        self._transport.close()
        if report.complete:
            LOG.info("run %s finished as %s, %d record(s) emitted", self.run_id, status, self._emitted)
        else:
            LOG.warning(
                "run %s finished as %s with %d record(s) left in %s",
                self.run_id,
                status,
                report.backlog,
                self._spool.directory,
            )
        return report

    def close(self) -> None:
        if self._shut_down() and self._transport is not None:
            self._transport.close()

    def _shut_down(self) -> bool:
        """Stop emission and the flusher, then spool whatever is still queued.

        Returns False when the handle was already closed.
        """

        with self._lock:
            if self._closed:
                return False
            self._closed = True
        self._stop_event.set()
        if self._flusher is not None:
            self._flusher.wake()
            self._flusher.join()
        if self._enabled:
            try:
                self._spool.append_from_queue(self._queue)
            except OSError:
                LOG.exception("failed to spool pending records of run %s", self.run_id)
        return True

    def __enter__(self) -> "RunHandle":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.finish("failed" if exc_type is not None else "completed")


def _config_bytes(config: Any) -> bytes:
    if hasattr(config, "to_dict"):
        config = config.to_dict()
    return canonical_json(config)


def start_run(
    endpoint: str,
    name: str,
    config: Any,
    *,
    settings: Optional[ClientSettings] = None,
    http: Optional[httpx.Client] = None,
) -> RunHandle:
    """Register a run and return its handle.

    The run id is generated locally and the creation request is spooled like
    any other telemetry, so an unreachable server only delays registration.
    """

    settings = settings or ClientSettings(endpoint=endpoint)
    settings.endpoint = endpoint
    run_id = new_run_id()
    if not settings.enabled:
        return RunHandle(run_id, name, settings)

    try:
        config_blob = _config_bytes(config)
    except (TypeError, ValueError) as exc:
        LOG.warning("run configuration is not serializable, telemetry disabled: %s", exc)
        return RunHandle(run_id, name, settings)

    try:
        spool = Spool(Path(settings.spool_dir) / run_id)
        ref = digest(config_blob, CONFIG_MEDIA_TYPE)
        spool.stage_blob(ref.digest, config_blob)
        spool.add_control(
            {"op": "create_run", "run_id": run_id, "name": name, "config_digest": ref.digest}
        )
    except OSError as exc:
        LOG.warning("cannot create spool under %s, telemetry disabled: %s", settings.spool_dir, exc)
        return RunHandle(run_id, name, settings)

    transport = ObsTransport(endpoint, settings.token, timeout=settings.timeout, http=http)
    handle = RunHandle(run_id, name, settings, spool=spool, transport=transport)
    report = handle.flush()
    if report.error:
        LOG.warning(
            "observability server %s unreachable, spooling run %s to %s",
            endpoint,
            run_id,
            spool.directory,
        )
    else:
        LOG.info("started run %s (%s) on %s", run_id, name, endpoint)
    handle.start_flusher()
    return handle


def replay_spool(spool_dir: Path, transport: ObsTransport, batch_size: int = 256) -> DeliveryReport:
    """Deliver a spool left behind by an earlier process."""

    spool = Spool(Path(spool_dir))
    report = deliver_spool(spool, transport, batch_size, final=True)
    LOG.info(
        "replayed %s: delivered=%d duplicates=%d rejected=%d backlog=%d",
        spool.directory,
        report.delivered,
        report.duplicates,
        report.rejected,
        report.backlog,
    )
    return report
