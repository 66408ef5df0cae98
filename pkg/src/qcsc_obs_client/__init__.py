"""Client instrumentation for QCSC workflows.

The workload obtains a :class:`RunHandle` from :func:`start_run` and reports
through it: task spans (L3), scheduler job rows (L2) and domain artifacts (L4).
Records are spooled to disk and delivered by a background thread, so a slow or
absent server never stalls or fails the workload.
"""

from .errors import TransportError  # noqa: F401
from .flusher import DeliveryReport, SpoolFlusher, deliver_spool  # noqa: F401
from .handle import (  # noqa: F401
    ARTIFACT_NAMES,
    REQUIRED_JOB_KEYS,
    ClientSettings,
    RunHandle,
    TaskSpan,
    replay_spool,
    start_run,
)
from .spool import Spool  # noqa: F401
from .transport import ObsTransport  # noqa: F401

__all__ = [
    "ARTIFACT_NAMES",
    "REQUIRED_JOB_KEYS",
    "ClientSettings",
    "DeliveryReport",
    "ObsTransport",
    "RunHandle",
    "Spool",
    "SpoolFlusher",
    "TaskSpan",
    "TransportError",
    "deliver_spool",
    "replay_spool",
    "start_run",
]
