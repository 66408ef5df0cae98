"""On-disk spool decoupling telemetry emission from delivery.

Layout of one spool directory (one per run)::

    records.ndjson   canonical records, append-only
    records.cursor   byte offset of the first record not yet acknowledged
    control.json     pending run-level operations (create, status change)
    blobs/<digest>   artifacts not yet uploaded

The cursor only moves after the server acknowledged the records before it, so
a crash anywhere leaves at worst records that are sent twice; the server
deduplicates them by record id.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import tempfile
from pathlib import Path
from threading import RLock
from typing import Dict, List, Optional, Sequence, Tuple

LOG = logging.getLogger(__name__)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "wb") as handle:
        handle.write(data)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp_name, path)


class Spool:
    """Durable per-run outbox. All mutation happens under :attr:`lock`."""

    def __init__(self, directory: Path) -> None:
        self._dir = Path(directory)
        self._blob_dir = self._dir / "blobs"
        self._blob_dir.mkdir(parents=True, exist_ok=True)
        self._records = self._dir / "records.ndjson"
        self._cursor_path = self._dir / "records.cursor"
        self._control_path = self._dir / "control.json"
        self._records.touch(exist_ok=True)
        self.lock = RLock()

    @property
    def directory(self) -> Path:
        return self._dir

    # ------------------------------------------------------------------
    # Records
    # ------------------------------------------------------------------
    def append(self, lines: Sequence[bytes]) -> None:
        if not lines:
            return
        with self.lock:
            with self._records.open("ab") as handle:
                handle.write(b"".join(line + b"\n" for line in lines))
                handle.flush()
                os.fsync(handle.fileno())

    def append_from_queue(self, pending: "queue.Queue[bytes]", extra: Optional[bytes] = None) -> int:
        """Move everything queued, then ``extra``, into the spool in order."""

        with self.lock:
            lines: List[bytes] = []
            while True:
                try:
                    lines.append(pending.get_nowait())
                except queue.Empty:
                    break
            if extra is not None:
                lines.append(extra)
            self.append(lines)
            return len(lines)

    def cursor(self) -> int:
        with self.lock:
            try:
                return int(self._cursor_path.read_text().strip() or 0)
            except FileNotFoundError:
                return 0

    def end(self) -> int:
        return self._records.stat().st_size

    def pending(self, max_records: int) -> Tuple[List[bytes], int]:
        """Up to ``max_records`` unacknowledged lines and the offset after them."""

        with self.lock:
            start = self.cursor()
            with self._records.open("rb") as handle:
                handle.seek(start)
                lines: List[bytes] = []
                offset = start
                while len(lines) < max_records:
                    line = handle.readline()
                    if not line.endswith(b"\n"):
                        break
                    offset += len(line)
                    if line.strip():
                        lines.append(line.rstrip(b"\n"))
            return lines, offset

    def ack(self, offset: int) -> None:
        with self.lock:
            if offset < self.cursor():
                return
            _atomic_write(self._cursor_path, f"{offset}\n".encode("ascii"))

    def backlog(self) -> int:
        with self.lock:
            with self._records.open("rb") as handle:
                handle.seek(self.cursor())
                return handle.read().count(b"\n")

    def total_records(self) -> int:
        with self.lock:
            return self._records.read_bytes().count(b"\n")

    # ------------------------------------------------------------------
    # Blobs
    # ------------------------------------------------------------------
    def stage_blob(self, blob_digest: str, data: bytes) -> None:
        path = self._blob_dir / blob_digest
        if path.exists():
            return
        _atomic_write(path, data)

    def staged_blobs(self) -> List[str]:
        return sorted(
            entry.name for entry in self._blob_dir.iterdir() if not entry.name.startswith(".")
        )

    def read_blob(self, blob_digest: str) -> bytes:
        return (self._blob_dir / blob_digest).read_bytes()

    def drop_blob(self, blob_digest: str) -> None:
        try:
            (self._blob_dir / blob_digest).unlink()
        except FileNotFoundError:
            pass

    # ------------------------------------------------------------------
    # Control operations
    # ------------------------------------------------------------------
    def control_ops(self) -> List[Dict[str, str]]:
        with self.lock:
            try:
                return json.loads(self._control_path.read_text())
            except FileNotFoundError:
                return []

    def add_control(self, op: Dict[str, str]) -> None:
        with self.lock:
            ops = self.control_ops()
            ops.append(dict(op))
            _atomic_write(self._control_path, json.dumps(ops, sort_keys=True).encode("utf-8"))

    def complete_control(self, op: Dict[str, str]) -> None:
        with self.lock:
            ops = self.control_ops()
            if op in ops:
                ops.remove(op)
            _atomic_write(self._control_path, json.dumps(ops, sort_keys=True).encode("utf-8"))

    def is_drained(self) -> bool:
        return self.backlog() == 0 and not self.staged_blobs() and not self.control_ops()
