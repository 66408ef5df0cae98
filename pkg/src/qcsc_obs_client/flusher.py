"""Background delivery of spooled telemetry."""

from __future__ import annotations

import json
import logging
import queue
import re
from dataclasses import dataclass
from threading import Event, Lock, Thread
from typing import Dict, List, Optional

from qcsc_telemetry import digest

from .errors import TransportError
from .spool import Spool
from .transport import ObsTransport

LOG = logging.getLogger(__name__)

_RUN_ID_RE = re.compile(r"^[0-9a-f]{32}$")


@dataclass
class DeliveryReport:
    """Outcome of one delivery pass over a spool."""

    delivered: int = 0
    duplicates: int = 0
    rejected: int = 0
    blobs: int = 0
    backlog: int = 0
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.error is None and self.backlog == 0


def deliver_spool(
    spool: Spool,
    transport: ObsTransport,
    batch_size: int = 256,
    *,
    final: bool = False,
) -> DeliveryReport:
    """Push blobs, run creations, records and status changes, in that order.

    Status changes are only sent on a ``final`` pass, and only once every
    spooled record has been acknowledged. Stops at the first transport failure;
    everything not acknowledged stays in the spool for the next pass.
    """

    report = DeliveryReport()
    try:
        for blob_digest in spool.staged_blobs():
            data = spool.read_blob(blob_digest)
            ref = digest(data)
            if ref.digest != blob_digest:
                LOG.error("dropping staged blob %s: content does not match its name", blob_digest)
                spool.drop_blob(blob_digest)
                continue
            transport.put_blob(ref, data)
            spool.drop_blob(blob_digest)
            report.blobs += 1

        for op in spool.control_ops():
            if op.get("op") == "create_run":
                transport.create_run(op["run_id"], op["name"], op["config_digest"])
                spool.complete_control(op)

        while True:
            lines, offset = spool.pending(batch_size)
            if not lines:
                break
            for run_id, batch in _group_by_run(lines, report).items():
                result = transport.post_records(run_id, b"".join(line + b"\n" for line in batch))
                report.delivered += int(result.get("accepted", 0))
                report.duplicates += int(result.get("duplicates", 0))
                for error in result.get("errors", []):
                    report.rejected += 1
                    LOG.warning(
                        "server rejected record %s: %s", error.get("record_id"), error.get("reason")
                    )
            spool.ack(offset)

        if final and spool.backlog() == 0:
            for op in spool.control_ops():
                if op.get("op") == "set_status":
                    transport.set_status(op["run_id"], op["status"])
                    spool.complete_control(op)
    except TransportError as exc:
        report.error = str(exc)
        LOG.debug("delivery pass stopped: %s", exc)
    report.backlog = spool.backlog()
    return report


def _run_of(line: bytes) -> Optional[str]:
    try:
        run_id = json.loads(line).get("run_id")
    except (ValueError, AttributeError):
        return None
    if not isinstance(run_id, str) or not _RUN_ID_RE.match(run_id):
        return None
    return run_id


def _group_by_run(lines: List[bytes], report: DeliveryReport) -> Dict[str, List[bytes]]:
    groups: Dict[str, List[bytes]] = {}
    for line in lines:
        run_id = _run_of(line)
        if run_id is None:
            report.rejected += 1
            LOG.error("dropping unreadable spool line: %r", line[:80])
            continue
        groups.setdefault(run_id, []).append(line)
    return groups


class SpoolFlusher(Thread):
    """Drain the in-memory queue into the spool and deliver it periodically."""

    def __init__(
        self,
        spool: Spool,
        transport: ObsTransport,
        pending: "queue.Queue[bytes]",
        interval: float,
        stop_event: Event,
        batch_size: int = 256,
    ) -> None:
        super().__init__(daemon=True, name=f"spool-flusher-{spool.directory.name}")
        self._spool = spool
        self._transport = transport
        self._pending = pending
        self._interval = interval
        self._stop_event = stop_event
        self._batch_size = batch_size
        self._wake = Event()
        self._delivery_lock = Lock()
        self._warned = False

    def run(self) -> None:
        while not self._stop_event.is_set():
            try:
                self.poll()
            except Exception:  # pragma: no cover - logged below
                LOG.exception("spool flusher encountered an error")
            self._wake.wait(self._interval)
            self._wake.clear()
        self._spool.append_from_queue(self._pending)

    def wake(self) -> None:
        self._wake.set()

    def poll(self, final: bool = False) -> DeliveryReport:
        with self._delivery_lock:
            self._spool.append_from_queue(self._pending)
            report = deliver_spool(self._spool, self._transport, self._batch_size, final=final)
        if report.error and not self._warned:
            LOG.warning(
                "observability server unavailable, spooling telemetry to %s (%s)",
                self._spool.directory,
                report.error,
            )
            self._warned = True
        elif report.error is None:
            self._warned = False
        return report
