"""Metric definitions: pure functions from stored run data to metric rows."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections import defaultdict
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from qcsc_telemetry import TelemetryLevel, TelemetryRecord
from qcsc_telemetry.canonical import parse_timestamp
from qcsc_telemetry.records import (
    HPC_JOB_KIND,
    QPU_JOB_KIND,
    RESULT_KIND,
    SAMPLER_STATS_KIND,
    SELECTION_KIND,
    TASK_TIMING_KIND,
)

from . import metrics
from .errors import MetricInputError
from .extract import MissingInput, RunData
from .table import MetricRow

LOG = logging.getLogger(__name__)

ITERATION = "iteration"
POPULATION = "population"

Computed = Tuple[Optional[float], Tuple[str, ...]]


class MetricDefinition(ABC):
    """Base class for metrics managed by :class:`~qcsc_etl.registry.MetricRegistry`.

    ``inputs`` names the record kinds and artifact names the metric reads;
    ``keying`` is the subset of ``(iteration, population)`` its rows are
    keyed by.
    """

    name: str
    level: TelemetryLevel
    version: int = 1
    inputs: Tuple[str, ...] = ()
    keying: Tuple[str, ...] = ()

    @property
    def key(self) -> str:
        return f"{self.name}.v{self.version}"

    @abstractmethod
    def compute(self, data: RunData) -> List[MetricRow]:
        """Return the rows of this metric for one run."""

    def row(
        self,
        data: RunData,
        iteration: Optional[int],
        population: Optional[int],
        body: Callable[[], Computed],
        component: Optional[str] = None,
    ) -> MetricRow:
        """Evaluate ``body``; missing or unusable inputs give a null row with a note."""

        try:
            value, provenance = body()
        except MissingInput as exc:
            LOG.info("%s: g=%s i=%s is null (%s)", self.key, iteration, population, exc.note)
            value, provenance = None, (exc.note,)
        except MetricInputError as exc:
            LOG.warning("%s: g=%s i=%s is null: %s", self.key, iteration, population, exc)
            value, provenance = None, (f"invalid:{self.name}",)
        return MetricRow(
            run_id=data.run_id,
            iteration=iteration,
            population=population,
            value=value,
            component=component,
            provenance=provenance,
        )


def _by_iteration(data: RunData, artifact: str) -> List[Tuple[Optional[int], List[Optional[int]]]]:
    """Populations holding ``artifact``, grouped by iteration in ascending order."""

    grouped: Dict[Optional[int], List[Optional[int]]] = defaultdict(list)
    for g, i in data.artifact_keys(artifact):
        grouped[g].append(i)
    return list(grouped.items())


# ----------------------------------------------------------------------
# Domain metrics (L4)
# ----------------------------------------------------------------------
class CarryoverAcquisition(MetricDefinition):
    name = "carryover_acquisition"
    level = TelemetryLevel.L4
    inputs = ("carryover",)
    keying = (ITERATION,)

    def compute(self, data: RunData) -> List[MetricRow]:
        winners = {g: populations[0] for g, populations in _by_iteration(data, "carryover")}
        rows = []
        for g in winners:

            def body(g: Optional[int] = g) -> Computed:
                cur_ref = data.artifact("carryover", g, winners[g])
                cur = data.bitset(cur_ref)
                if not g:
                    return metrics.carryover_acquisition(None, cur), cur_ref.provenance
                prev_ref = data.artifact("carryover", g - 1, winners.get(g - 1))
                value = metrics.carryover_acquisition(data.bitset(prev_ref), cur)
                return value, cur_ref.provenance + prev_ref.provenance

            rows.append(self.row(data, g, None, body))
        return rows


class ParameterConvergence(MetricDefinition):
    name = "parameter_convergence"
    level = TelemetryLevel.L4
    inputs = ("ucj_parameter",)
    keying = (ITERATION,)

    def compute(self, data: RunData) -> List[MetricRow]:
        rows = []
        for g, populations in _by_iteration(data, "ucj_parameter"):

            def body(g: Optional[int] = g, populations: Sequence[int] = populations) -> Computed:
                refs = [data.artifact("ucj_parameter", g, i) for i in populations]
                value = metrics.parameter_convergence([data.vector(ref) for ref in refs])
                return value, tuple(p for ref in refs for p in ref.provenance)

            rows.append(self.row(data, g, None, body))
        return rows


class HammingToRhf(MetricDefinition):
    name = "hamming_to_rhf"
    level = TelemetryLevel.L4
    inputs = ("carryover", "sqd_problem")
    keying = (ITERATION,)

    def compute(self, data: RunData) -> List[MetricRow]:
        rows = []
        for g, populations in _by_iteration(data, "carryover"):

            def body(g: Optional[int] = g, population: Optional[int] = populations[0]) -> Computed:
                n_e = int(data.problem()["n_alpha"])
                ref = data.artifact("carryover", g, population)
                return metrics.hamming_to_rhf(data.bitset(ref), n_e), ref.provenance

            rows.append(self.row(data, g, None, body))
        return rows


class SamplePreservation(MetricDefinition):
    name = "sample_preservation"
    level = TelemetryLevel.L4
    inputs = ("raw_bitstrings", "recovered_bitstrings")
    keying = (ITERATION, POPULATION)

    def compute(self, data: RunData) -> List[MetricRow]:
        rows = []
        for g, i in data.artifact_keys("recovered_bitstrings"):

            def body(g: Optional[int] = g, i: Optional[int] = i) -> Computed:
                raw_ref = data.artifact("raw_bitstrings", g, i)
                recovered_ref = data.artifact("recovered_bitstrings", g, i)
                value = metrics.sample_preservation(
                    data.bitset(raw_ref), data.bitset(recovered_ref)
                )
                return value, raw_ref.provenance + recovered_ref.provenance

            rows.append(self.row(data, g, i, body))
        return rows


class OrbitalOccupancy(MetricDefinition):
    name = "avg_occupancy"
    level = TelemetryLevel.L4
    inputs = ("avg_occupancy",)
    keying = (ITERATION,)

    def compute(self, data: RunData) -> List[MetricRow]:
        rows: List[MetricRow] = []
        for g, populations in _by_iteration(data, "avg_occupancy"):
            ref = data.artifact("avg_occupancy", g, populations[0])
            try:
                occupancy = data.vector(ref)
            except MissingInput as exc:
                rows.append(MetricRow(data.run_id, g, None, None, None, (exc.note,)))
                continue
            for p, value in enumerate(occupancy):
                rows.append(
                    MetricRow(data.run_id, g, None, float(value), f"{p:03d}", ref.provenance)
                )
        return rows


class EventMetric(MetricDefinition):
    """Scalar read from an L4 event payload, keyed by iteration and population."""

    keying = (ITERATION, POPULATION)

    def __init__(
        self,
        name: str,
        kind: str,
        value: Callable[[Mapping[str, object]], float],
        level: TelemetryLevel = TelemetryLevel.L4,
    ) -> None:
        self.name = name
        self.level = level
        self.inputs = (kind,)
        self._kind = kind
        self._value = value

    def compute(self, data: RunData) -> List[MetricRow]:
        rows = []
        for record in _first_per_key(data.of_kind(self._kind, self.level)):

            def body(record: TelemetryRecord = record) -> Computed:
                try:
                    value = float(self._value(record.payload))
                except (KeyError, TypeError, ValueError) as exc:
                    raise MetricInputError(f"{self._kind} payload unusable: {exc}") from exc
                return value, (record.record_id,)

            rows.append(self.row(data, record.iteration, record.population, body))
        return rows


def _first_per_key(records: Sequence[TelemetryRecord]) -> List[TelemetryRecord]:
    seen = set()
    kept = []
    for record in records:
        key = (record.iteration, record.population)
        if key not in seen:
            seen.add(key)
            kept.append(record)
    return kept


def _retention(payload: Mapping[str, object]) -> float:
    return metrics.shot_retention(int(payload["retained"]), int(payload["shots"]))


# ----------------------------------------------------------------------
# Performance metrics (L2 / L3)
# ----------------------------------------------------------------------
def _seconds_between(payload: Mapping[str, object], start: str, end: str) -> float:
    return (parse_timestamp(str(payload[end])) - parse_timestamp(str(payload[start]))).total_seconds()


class JobTableMetric(MetricDefinition):
    """One value per job row; the job id is the row component."""

    level = TelemetryLevel.L2
    keying = (ITERATION, POPULATION)

    def __init__(self, name: str, kind: str, value: Callable[[Mapping[str, object]], float]) -> None:
        self.name = name
        self.inputs = (kind,)
        self._kind = kind
        self._value = value

    def compute(self, data: RunData) -> List[MetricRow]:
        rows = []
        seen = set()
        for record in data.of_kind(self._kind, TelemetryLevel.L2):
            job_id = str(record.payload.get("job_id", record.record_id))
            key = (record.iteration, record.population, job_id)
            if key in seen:
                continue
            seen.add(key)

            def body(record: TelemetryRecord = record) -> Computed:
                try:
                    value = float(self._value(record.payload))
                except (KeyError, TypeError, ValueError) as exc:
                    raise MetricInputError(f"{self._kind} row unusable: {exc}") from exc
                return value, (record.record_id,)

            rows.append(self.row(data, record.iteration, record.population, body, job_id))
        return rows


class TaskDuration(MetricDefinition):
    """Summed L3 span durations per task name.

    The effective variant adds the simulated queue and service seconds a span
    was annotated with, which is what the wrapped job cost on a real system.
    """

    level = TelemetryLevel.L3
    inputs = (TASK_TIMING_KIND,)
    keying = (ITERATION, POPULATION)

    def __init__(self, name: str, effective: bool) -> None:
        self.name = name
        self._effective = effective

    def compute(self, data: RunData) -> List[MetricRow]:
        totals: Dict[Tuple[Optional[int], Optional[int], str], float] = defaultdict(float)
        sources: Dict[Tuple[Optional[int], Optional[int], str], List[str]] = defaultdict(list)
        for record in data.of_kind(TASK_TIMING_KIND, TelemetryLevel.L3):
            key = (record.iteration, record.population, record.task_name)
            seconds = float(record.payload.get("wall_clock_s") or 0.0)
            if self._effective:
                seconds += float(record.payload.get("simulated_s") or 0.0)
            totals[key] += seconds
            sources[key].append(record.record_id)
        return [
            MetricRow(data.run_id, g, i, totals[(g, i, task)], task, tuple(sources[(g, i, task)]))
            for g, i, task in totals
        ]


def default_definitions() -> List[MetricDefinition]:
    return [
        CarryoverAcquisition(),
        ParameterConvergence(),
        HammingToRhf(),
        SamplePreservation(),
        OrbitalOccupancy(),
        EventMetric("shot_retention", SAMPLER_STATS_KIND, _retention),
        EventMetric("trial_energy", RESULT_KIND, lambda payload: payload["energy"]),
        EventMetric("accepted_energy", SELECTION_KIND, lambda payload: payload["accepted_energy"]),
        JobTableMetric("qpu_usage", QPU_JOB_KIND, lambda row: row["usage_s"]),
        JobTableMetric(
            "qpu_queueing", QPU_JOB_KIND, lambda row: _seconds_between(row, "created_at", "started_at")
        ),
        JobTableMetric(
            "qpu_wall_clock", QPU_JOB_KIND, lambda row: _seconds_between(row, "started_at", "ended_at")
        ),
        JobTableMetric("hpc_tokens", HPC_JOB_KIND, lambda row: row["tokens"]),
        JobTableMetric("hpc_queueing", HPC_JOB_KIND, lambda row: _seconds_between(row, "etime", "stime")),
        JobTableMetric("hpc_walltime", HPC_JOB_KIND, lambda row: row["walltime"]),
        JobTableMetric("hpc_vmem", HPC_JOB_KIND, lambda row: row["resources_used.vmem"]),
        JobTableMetric("hpc_cpupercent", HPC_JOB_KIND, lambda row: row["resources_used.cpupercent"]),
        TaskDuration("task_duration", effective=False),
        TaskDuration("task_effective_duration", effective=True),
    ]
