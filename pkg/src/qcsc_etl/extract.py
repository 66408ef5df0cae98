"""Extract step: one run's stored records and blobs, indexed for metrics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from qcsc_obs_server.errors import BlobCorruptionError, BlobNotFoundError
from qcsc_obs_server.service import ObservabilityService
from qcsc_obs_server.store import RecordFilter, RunManifest
from qcsc_telemetry import BitstringSet, TelemetryLevel, TelemetryRecord, unpack_bitstrings, unpack_vector
from qcsc_telemetry.errors import ContainerFormatError
from qcsc_telemetry.records import ARTIFACT_KIND, PROBLEM_KIND

LOG = logging.getLogger(__name__)

Key = Tuple[Optional[int], Optional[int]]


@dataclass(frozen=True)
class ArtifactRef:
    name: str
    iteration: Optional[int]
    population: Optional[int]
    record_id: str
    digest: str

    @property
    def provenance(self) -> Tuple[str, ...]:
        return (self.record_id, self.digest)


class MissingInput(LookupError):
    """An input record or blob is absent; the row becomes null."""

    def __init__(self, note: str) -> None:
        super().__init__(note)
        self.note = f"missing:{note}"


class RunData:
    """Immutable view of one run, shared by all metric computations."""

    def __init__(
        self,
        service: ObservabilityService,
        manifest: RunManifest,
        records: List[TelemetryRecord],
    ) -> None:
        self._service = service
        self.manifest = manifest
        self.records = sorted(records, key=lambda record: record.sort_key)
        self._artifacts: Dict[Tuple[str, Optional[int], Optional[int]], ArtifactRef] = {}
        for record in self.records:
            if record.level is not TelemetryLevel.L4 or record.kind != ARTIFACT_KIND:
                continue
            name = record.payload.get("artifact")
            if not isinstance(name, str) or not record.blob_refs:
                continue
            key = (name, record.iteration, record.population)
            # first write wins; retried tasks re-emit identical content
            self._artifacts.setdefault(
                key,
                ArtifactRef(
                    name,
                    record.iteration,
                    record.population,
                    record.record_id,
                    record.blob_refs[0].digest,
                ),
            )

    @classmethod
    def load(cls, service: ObservabilityService, run_id: str) -> "RunData":
        manifest = service.get_run(run_id)
        records = service.query_records(run_id, RecordFilter())
        LOG.debug("extracted %d record(s) of run %s", len(records), run_id)
        return cls(service, manifest, records)

    @property
    def run_id(self) -> str:
        return self.manifest.run_id

    # ------------------------------------------------------------------
    # Records
    # ------------------------------------------------------------------
    def of_kind(self, kind: str, level: Optional[TelemetryLevel] = None) -> List[TelemetryRecord]:
        return [
            record
            for record in self.records
            if record.kind == kind and (level is None or record.level is level)
        ]

    def problem(self) -> Mapping[str, Any]:
        events = self.of_kind(PROBLEM_KIND)
        if not events:
            raise MissingInput(PROBLEM_KIND)
        return events[0].payload

    def config(self) -> Dict[str, Any]:
        """The run's configuration blob, or an empty mapping if it is unreadable."""

        try:
            data = json.loads(self._service.run_config(self.run_id))
        except (BlobNotFoundError, BlobCorruptionError, ValueError) as exc:
            LOG.warning("configuration of run %s unavailable: %s", self.run_id, exc)
            return {}
        return data if isinstance(data, dict) else {}

    # ------------------------------------------------------------------
    # Artifacts
    # ------------------------------------------------------------------
    def artifact_keys(self, name: str) -> List[Key]:
        keys = {(g, i) for (artifact, g, i) in self._artifacts if artifact == name}
        return sorted(keys, key=lambda key: (_order(key[0]), _order(key[1])))

    def artifact(self, name: str, iteration: Optional[int], population: Optional[int]) -> ArtifactRef:
        ref = self._artifacts.get((name, iteration, population))
        if ref is None:
            raise MissingInput(f"{name}@g={iteration}/i={population}")
        return ref

    def _blob(self, ref: ArtifactRef) -> bytes:
        try:
            return self._service.get_blob(ref.digest)
        except (BlobNotFoundError, BlobCorruptionError) as exc:
            LOG.warning("artifact %s of run %s unreadable: %s", ref.name, self.run_id, exc)
            raise MissingInput(f"{ref.name}@{ref.digest}") from exc

    def bitset(self, ref: ArtifactRef) -> BitstringSet:
        try:
            return unpack_bitstrings(self._blob(ref))
        except ContainerFormatError as exc:
            raise MissingInput(f"{ref.name}@{ref.digest}") from exc

    def vector(self, ref: ArtifactRef) -> np.ndarray:
        try:
            return unpack_vector(self._blob(ref))
        except ContainerFormatError as exc:
            raise MissingInput(f"{ref.name}@{ref.digest}") from exc


def _order(value: Optional[int]) -> int:
    return -1 if value is None else value
