"""Simulated QPU and HPC schedulers producing L2 job telemetry."""

from .errors import IncompleteJobError, QuotaExceededError  # noqa: F401
from .models import DelayModel, SchedulerModel  # noqa: F401
from .scheduler import (  # noqa: F401
    HPC_TOKENS,
    QPU_SECONDS,
    HpcJobRecord,
    JobScheduler,
    QpuJobRecord,
    QuotaLedger,
    SimClock,
    qpu_row,
    qstat_row,
)

__all__ = [
    "DelayModel",
    "HPC_TOKENS",
    "HpcJobRecord",
    "IncompleteJobError",
    "JobScheduler",
    "QPU_SECONDS",
    "QpuJobRecord",
    "QuotaExceededError",
    "QuotaLedger",
    "SchedulerModel",
    "SimClock",
    "qpu_row",
    "qstat_row",
]
