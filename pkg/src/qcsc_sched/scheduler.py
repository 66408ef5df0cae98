"""Simulated loosely coupled QPU and HPC job submission.

Closures run for real, in the calling thread. Queueing and service times are
drawn from the :class:`SchedulerModel` and stamped onto the job records as
synthetic instants on a :class:`SimClock`, so a desk-scale run finishes in
minutes while its job records look like a week of allocation.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from threading import Lock
from typing import Callable, Dict, Mapping, Optional, Tuple, TypeVar

import numpy as np

from qcsc_telemetry.canonical import format_timestamp

from .errors import IncompleteJobError, QuotaExceededError
from .models import SchedulerModel

LOG = logging.getLogger(__name__)

T = TypeVar("T")

QPU_SECONDS = "qpu_seconds"
HPC_TOKENS = "hpc_tokens"


class QuotaLedger:
    """Thread-safe allocation accounting; never goes negative."""

    def __init__(self, allocations: Mapping[str, float]) -> None:
        self._initial: Dict[str, float] = {key: float(value) for key, value in allocations.items()}
        self._used: Dict[str, float] = {key: 0.0 for key in self._initial}
        self._lock = Lock()

    def debit(self, resource: str, amount: float) -> float:
        """Consume ``amount`` atomically and return what is left."""

        if amount < 0:
            raise ValueError("cannot debit a negative amount")
        with self._lock:
            if resource not in self._initial:
                raise KeyError(f"no allocation for '{resource}'")
            remaining = self._initial[resource] - self._used[resource]
            if amount > remaining:
                raise QuotaExceededError(resource, amount, remaining)
            self._used[resource] += amount
            return remaining - amount

    def remaining(self, resource: str) -> float:
        with self._lock:
            return self._initial[resource] - self._used[resource]

    def used(self, resource: str) -> float:
        with self._lock:
            return self._used[resource]

    def initial(self, resource: str) -> float:
        return self._initial[resource]


class SimClock:
    """Monotone synthetic wall clock shared by both schedulers."""

    def __init__(self, epoch: datetime) -> None:
        self._now = epoch
        self._lock = Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def advance_to(self, instant: datetime) -> datetime:
        with self._lock:
            if instant > self._now:
                self._now = instant
            return self._now


@dataclass(frozen=True)
class QpuJobRecord:
    job_id: str
    created_at: datetime
    started_at: Optional[datetime]
    ended_at: Optional[datetime]
    usage_s: float
    shots: int

    @property
    def queueing_s(self) -> float:
        return (self.started_at - self.created_at).total_seconds()

    @property
    def wall_clock_s(self) -> float:
        return (self.ended_at - self.started_at).total_seconds()


@dataclass(frozen=True)
class HpcJobRecord:
    """Field names follow the batch system's job status output."""

    job_id: str
    etime: datetime
    stime: Optional[datetime]
    walltime: Optional[float]
    vmem: Optional[int]
    cpupercent: Optional[int]
    nodes: int
    tokens: float = 0.0

    @property
    def queueing_s(self) -> float:
        return (self.stime - self.etime).total_seconds()

    @property
    def ended_at(self) -> datetime:
        return self.stime + timedelta(seconds=self.walltime)


def _span(seconds: float) -> timedelta:
    # records carry microsecond instants; round once so derived differences are exact
    return timedelta(microseconds=round(seconds * 1e6))


class JobScheduler:
    """Submit closures as simulated QPU primitives and HPC batch jobs."""

    def __init__(
        self,
        model: SchedulerModel,
        ledger: Optional[QuotaLedger] = None,
        clock: Optional[SimClock] = None,
    ) -> None:
        self.model = model
        self.ledger = ledger or QuotaLedger(
            {QPU_SECONDS: model.qpu_seconds, HPC_TOKENS: model.hpc_tokens}
        )
        self.clock = clock or SimClock(model.epoch)
        self._qpu_ids = itertools.count(1)
        self._hpc_ids = itertools.count(1)
        self._id_lock = Lock()

    def _next_id(self, counter: "itertools.count[int]", template: str) -> str:
        with self._id_lock:
            return template.format(next(counter))

    def submit_qpu(
        self,
        work: Callable[[], T],
        rng: np.random.Generator,
        *,
        shots: int,
        submit_at: Optional[datetime] = None,
        job_id: Optional[str] = None,
    ) -> Tuple[T, QpuJobRecord]:
        """Run a sampling closure as one QPU primitive job.

        ``rng`` is only used for timing draws and must not be the workload's
        numerical stream.
        """

        queue_s = self.model.qpu_queue.sample(rng)
        wall_s = self.model.qpu_service.sample(rng)
        low, high = self.model.qpu_usage_fraction
        usage_s = round(wall_s * float(rng.uniform(low, high)), 6)

        self.ledger.debit(QPU_SECONDS, usage_s)
        result = work()

        created = submit_at or self.clock.now()
        started = created + _span(queue_s)
        record = QpuJobRecord(
            job_id=job_id or self._next_id(self._qpu_ids, "qpu-{:06d}"),
            created_at=created,
            started_at=started,
            ended_at=started + _span(wall_s),
            usage_s=usage_s,
            shots=int(shots),
        )
        LOG.debug(
            "qpu job %s: queue=%.1fs wall=%.1fs usage=%.1fs",
            record.job_id,
            record.queueing_s,
            record.wall_clock_s,
            usage_s,
        )
        return result, record

    def submit_hpc(
        self,
        work: Callable[[], T],
        rng: np.random.Generator,
        *,
        dimension: int = 0,
        submit_at: Optional[datetime] = None,
        job_id: Optional[str] = None,
    ) -> Tuple[T, HpcJobRecord]:
        """Run a diagonalization closure as one batch job on ``hpc_nodes`` nodes."""

        model = self.model
        queue_s = model.hpc_queue.sample(rng)
        walltime = round(model.hpc_service.sample(rng), 6)
        vmem_scale = float(rng.lognormal(0.0, model.vmem_sigma)) if model.vmem_sigma else 1.0
        vmem = int((model.vmem_base_bytes + model.vmem_bytes_per_dim * dimension) * vmem_scale)
        low, high = model.cpu_utilisation
        utilisation = float(rng.uniform(low, high))
        utilisation += model.cpu_gain_per_decade * math.log10(max(dimension, 1))
        cpupercent = int(round(min(utilisation, 1.0) * model.max_cpupercent))
        cpupercent = min(max(cpupercent, 0), model.max_cpupercent)
        tokens = model.tokens_for(walltime)

        self.ledger.debit(HPC_TOKENS, tokens)
        result = work()

        etime = submit_at or self.clock.now()
        record = HpcJobRecord(
            job_id=job_id or self._next_id(self._hpc_ids, "{:d}.hpc-sim"),
            etime=etime,
            stime=etime + _span(queue_s),
            walltime=walltime,
            vmem=vmem,
            cpupercent=cpupercent,
            nodes=model.hpc_nodes,
            tokens=tokens,
        )
        LOG.debug(
            "hpc job %s: queue=%.1fs walltime=%.1fs tokens=%.3f",
            record.job_id,
            record.queueing_s,
            walltime,
            tokens,
        )
        return result, record


def qpu_row(record: QpuJobRecord) -> Dict[str, object]:
    """Flat L2 payload of a finished QPU job."""

    if record.started_at is None or record.ended_at is None:
        raise IncompleteJobError(f"qpu job {record.job_id} has not finished")
    return {
        "job_id": record.job_id,
        "created_at": format_timestamp(record.created_at),
        "started_at": format_timestamp(record.started_at),
        "ended_at": format_timestamp(record.ended_at),
        "usage_s": record.usage_s,
        "shots": record.shots,
    }


def qstat_row(record: HpcJobRecord) -> Dict[str, object]:
    """Flat L2 payload of a finished batch job, keyed like ``qstat -f``."""

    missing = [
        name
        for name, value in (
            ("stime", record.stime),
            ("walltime", record.walltime),
            ("resources_used.vmem", record.vmem),
            ("resources_used.cpupercent", record.cpupercent),
        )
        if value is None
    ]
    if missing:
        raise IncompleteJobError(
            f"hpc job {record.job_id} is incomplete: missing {', '.join(missing)}"
        )
    return {
        "job_id": record.job_id,
        "etime": format_timestamp(record.etime),
        "stime": format_timestamp(record.stime),
        "walltime": record.walltime,
        "resources_used.vmem": int(record.vmem),
        "resources_used.cpupercent": int(record.cpupercent),
        "nodes": record.nodes,
        "tokens": record.tokens,
    }
