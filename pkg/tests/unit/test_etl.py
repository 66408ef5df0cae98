import fcntl
import math
import os
from pathlib import Path
from typing import List

import numpy as np
import pytest
from fastapi.testclient import TestClient

from qcsc_etl import (
    EtlPipeline,
    MetricDefinition,
    MetricInputError,
    MetricRegistry,
    MetricRow,
    MetricTable,
    PipelineLockedError,
    avg_occupancy,
    carryover_acquisition,
    default_definitions,
    default_registry,
    hamming_to_rhf,
    histogram,
    parameter_convergence,
    sample_preservation,
    shot_retention,
)
from qcsc_etl import oracles
from qcsc_etl.extract import RunData
from qcsc_etl.metrics import FALLBACK_BINS, MAX_BINS
from qcsc_obs_client import ClientSettings, start_run
from qcsc_obs_server import ObservabilityService, RecordFilter, RunStateError
from qcsc_obs_server.app import create_app
from qcsc_sched import JobScheduler, SchedulerModel
from qcsc_sqd import DEConfig, SamplerModel, hubbard_spec, run_closed_loop
from qcsc_sqd.loop import SubspaceSettings
from qcsc_telemetry import BitstringSet, TelemetryLevel

CARRYOVER = (
    BitstringSet.from_strings(["000111", "001011"]),
    BitstringSet.from_strings(["001011", "010011", "100011"]),
)
THETAS = (
    [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)],
    [(0.5, 0.5)] * 4,
)
RAW = BitstringSet(4, (0b0001, 0b0010, 0b0011))
RECOVERED = BitstringSet(4, (0b0010, 0b0011, 0b0101))


def build_service(tmp_path: Path) -> ObservabilityService:
    return ObservabilityService(tmp_path / "data")


def build_handle(service: ObservabilityService, tmp_path: Path, name: str = "synthetic"):
    client = TestClient(create_app(service))
    settings = ClientSettings(spool_dir=tmp_path / "spool", flush_interval=60.0)
    return start_run("http://testserver", name, {"name": name}, settings=settings, http=client)


def build_run(service: ObservabilityService, tmp_path: Path, finish: bool = True) -> str:
    """Two generations of four populations with hand-checkable artifacts."""

    handle = build_handle(service, tmp_path)
    handle.emit_event("sqd_problem", {"n_orb": 3, "n_alpha": 3, "n_beta": 3})
    for g in range(2):
        for i in range(4):
            handle.put_artifact("ucj_parameter", g, i, np.array(THETAS[g][i]))
            handle.put_artifact("raw_bitstrings", g, i, RAW)
            handle.put_artifact("recovered_bitstrings", g, i, RECOVERED)
            handle.emit_event("sqd_result", {"energy": -1.0 - g - 0.1 * i}, iteration=g, population=i)
        handle.put_artifact("carryover", g, 0, CARRYOVER[g])
        handle.put_artifact("avg_occupancy", g, 0, np.array([2.0, 1.5, 0.5]))
    handle.emit_event("sampler_stats", {"shots": 10, "retained": 4}, iteration=0, population=0)
    handle.emit_event("sampler_stats", {"shots": 0, "retained": 0}, iteration=0, population=1)
    if finish:
        assert handle.finish().complete
    else:
        handle.flush()
        handle.close()
    return handle.run_id


def tables_by_name(tables: List[MetricTable]) -> dict:
    return {table.name: table for table in tables}


class CarryoverSize(MetricDefinition):
    name = "carryover_size"
    level = TelemetryLevel.L4
    inputs = ("carryover",)
    keying = ("iteration",)

    def compute(self, data: RunData) -> List[MetricRow]:
        rows = []
        for g, i in data.artifact_keys("carryover"):

            def body(g=g, i=i):
                ref = data.artifact("carryover", g, i)
                return float(len(data.bitset(ref))), ref.provenance

            rows.append(self.row(data, g, None, body))
        return rows


# ----------------------------------------------------------------------
# Metric functions
# ----------------------------------------------------------------------
def test_carryover_acquisition_counts_new_strings():
    prev = BitstringSet.from_strings(["0011", "0101"])
    cur = BitstringSet.from_strings(["0101", "0110", "1001"])

    assert carryover_acquisition(prev, cur) == 2
    assert carryover_acquisition(cur, cur) == 0
    assert carryover_acquisition(None, cur) is None
    with pytest.raises(MetricInputError):
        carryover_acquisition(BitstringSet(3, (1,)), cur)


def test_parameter_convergence_examples():
    square = [(0, 0), (1, 0), (0, 1), (1, 1)]

    assert parameter_convergence(square) == pytest.approx((4 + 2 * math.sqrt(2)) / 6)
    assert parameter_convergence([(0.3, 0.1)] * 4) == 0.0
    assert parameter_convergence(square[::-1]) == pytest.approx(parameter_convergence(square))
    scaled = [(3 * x, 3 * y) for x, y in square]
    assert parameter_convergence(scaled) == pytest.approx(3 * parameter_convergence(square))
    with pytest.raises(MetricInputError):
        parameter_convergence([(0, 0)])
    with pytest.raises(MetricInputError):
        parameter_convergence([(0, 0), (1, 0, 0)])


def test_hamming_distance_to_reference():
    assert hamming_to_rhf(BitstringSet.from_strings(["000111"]), 3) == 0.0
    assert hamming_to_rhf(BitstringSet.from_strings(["000111", "011110"]), 3) == 1.0
    with pytest.raises(MetricInputError):
        hamming_to_rhf(BitstringSet(6, ()), 3)


def test_sample_preservation_examples():
    raw = BitstringSet.from_strings(["0011", "0101", "0110"])
    recovered = BitstringSet.from_strings(["0101", "0110", "1001"])

    assert sample_preservation(raw, recovered) == pytest.approx(2 / 3)
    assert sample_preservation(raw, raw) == 1.0
    with pytest.raises(MetricInputError):
        sample_preservation(raw, BitstringSet(4, ()))


def test_shot_retention_bounds():
    assert shot_retention(469, 1000) == 0.469
    with pytest.raises(MetricInputError):
        shot_retention(1, 0)
    with pytest.raises(MetricInputError):
        shot_retention(11, 10)


def test_avg_occupancy_examples():
    rhf = avg_occupancy([(0b000111, 0b000111)], [1.0], 6)
    mixed = avg_occupancy([(0b011, 0b011), (0b101, 0b011)], [math.sqrt(0.5)] * 2, 3)

    assert rhf.tolist() == [2.0, 2.0, 2.0, 0.0, 0.0, 0.0]
    assert mixed.tolist() == pytest.approx([2.0, 1.5, 0.5])
    assert mixed.sum() == pytest.approx(4.0)
    with pytest.raises(MetricInputError):
        avg_occupancy([(0b1, 0b1), (0b10, 0b10)], [1.0, 1.0], 2)


@pytest.mark.parametrize("seed", range(5))
def test_set_metrics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    width = 12
    size = int(rng.integers(1, 10_000))

    def random_set():
        return BitstringSet(width, tuple(int(v) for v in rng.integers(0, 1 << width, size=size)))

    prev, cur = random_set(), random_set()
    thetas = rng.normal(size=(6, 5)).tolist()

    assert carryover_acquisition(prev, cur) == oracles.carryover_acquisition_oracle(prev, cur)
    assert sample_preservation(prev, cur) == pytest.approx(oracles.sample_preservation_oracle(prev, cur))
    assert hamming_to_rhf(cur, 6) == pytest.approx(oracles.hamming_to_rhf_oracle(cur, 6))
    assert parameter_convergence(thetas) == pytest.approx(oracles.parameter_convergence_oracle(thetas))


def test_histogram_falls_back_for_degenerate_samples():
    counts, edges = histogram([600.0] * 40)
    spread, _ = histogram(np.random.default_rng(0).normal(size=500))

    assert counts.sum() == 40
    assert len(edges) == 21
    assert spread.sum() == 500
    assert histogram([])[0].size == 0


def test_histogram_caps_bins_for_heavy_tails():
    values = [0.0] * 500 + [1e-9] * 500 + [1e6]
    counts, edges = histogram(values)

    assert len(counts) == FALLBACK_BINS <= MAX_BINS
    assert len(edges) == len(counts) + 1
    assert counts.sum() == 1001
    assert edges[0] == 0.0 and edges[-1] == 1e6


def test_histogram_matches_freedman_diaconis_for_well_spread_samples():
    data = np.random.default_rng(4).normal(size=300)
    counts, edges = histogram(data)

    assert len(edges) == len(np.histogram_bin_edges(data, bins="fd"))
    assert counts.sum() == 300


# ----------------------------------------------------------------------
# Registry and tables
# ----------------------------------------------------------------------
def test_registry_rejects_duplicates():
    registry = MetricRegistry()
    registry.register(CarryoverSize())

    with pytest.raises(ValueError):
        registry.register(CarryoverSize())
    assert "carryover_size" in registry
    assert len(registry) == 1


def test_registry_resolves_versions():
    newer = CarryoverSize()
    newer.version = 2
    registry = MetricRegistry([CarryoverSize(), newer])

    assert registry.get("carryover_size").version == 2
    assert registry.select(["carryover_size.v1"])[0].version == 1
    assert registry.select(["carryover_size", "carryover_size.v2"]) == [newer]
    with pytest.raises(KeyError):
        registry.select(["carryover_size.v3"])
    with pytest.raises(KeyError):
        registry.get("unknown")

    registry.unregister("carryover_size", 2)
    assert registry.get("carryover_size").version == 1
    registry.unregister("carryover_size")
    assert "carryover_size" not in registry


def test_default_registry_names_are_unique():
    registry = default_registry()

    assert len(registry) == len(default_definitions())
    assert {"carryover_acquisition", "hamming_to_rhf", "qpu_usage", "hpc_queueing"} <= set(registry.names())


def test_metric_table_export_is_sorted_and_stable(tmp_path: Path):
    rows = [
        MetricRow("r", 1, None, 0.1, provenance=("b", "a")),
        MetricRow("r", 0, None, None, provenance=("missing:carryover@g=0/i=0",)),
    ]
    table = MetricTable("demo", 1, rows)

    lines = table.export().decode().splitlines()

    assert lines[0] == "# metric=demo version=1"
    assert lines[2] == "r\t0\tnull\tnull\tnull\tmissing:carryover@g=0/i=0"
    assert lines[3] == "r\t1\tnull\tnull\t0.10000000000000001\ta,b"
    assert MetricTable.read(table.write(tmp_path)).export() == table.export()
    with pytest.raises(ValueError):
        MetricTable("demo", 1, rows + [MetricRow("r", 1, None, 0.2)])


# ----------------------------------------------------------------------
# Pipeline
# ----------------------------------------------------------------------
def test_pipeline_computes_hand_checked_values(tmp_path: Path):
    service = build_service(tmp_path)
    run_id = build_run(service, tmp_path)

    tables = tables_by_name(EtlPipeline(service, tmp_path / "etl").run_pipeline(run_id, default_definitions()))

    assert tables["carryover_acquisition"].values() == [None, 2.0]
    assert tables["hamming_to_rhf"].values() == [1.0, 2.0]
    assert tables["parameter_convergence"].values() == pytest.approx([(4 + 2 * math.sqrt(2)) / 6, 0.0])
    assert tables["sample_preservation"].values() == pytest.approx([2 / 3] * 8)
    assert [row.component for row in tables["avg_occupancy"].rows] == ["000", "001", "002"] * 2
    assert len(tables["trial_energy"].rows) == 8
    assert tables["qpu_usage"].rows == []

    retention = tables["shot_retention"].rows
    assert retention[0].value == 0.4
    assert retention[1].value is None
    assert retention[1].provenance == ("invalid:shot_retention",)

    first_row = tables["carryover_acquisition"].rows[0]
    assert first_row.value is None and first_row.provenance


def test_pipeline_is_idempotent(tmp_path: Path):
    service = build_service(tmp_path)
    run_id = build_run(service, tmp_path)
    pipeline = EtlPipeline(service, tmp_path / "etl")

    first = pipeline.run_pipeline(run_id, default_definitions())
    second = pipeline.run_pipeline(run_id, default_definitions())

    assert [t.export_digest() for t in first] == [t.export_digest() for t in second]
    for table in first:
        path = tmp_path / "etl" / run_id / table.filename
        assert path.read_bytes() == table.export()
    assert [t.key for t in pipeline.load_tables(run_id)] == [t.key for t in first]


def test_metric_registered_after_the_run_uses_stored_blobs(tmp_path: Path):
    service = build_service(tmp_path)
    run_id = build_run(service, tmp_path)
    records_before = service.records.count(run_id)
    registry = default_registry()

    registry.register(CarryoverSize())
    (table,) = EtlPipeline(service, tmp_path / "etl").run_pipeline(run_id, registry.select(["carryover_size"]))

    assert table.values() == [2.0, 3.0]
    assert service.records.count(run_id) == records_before


def test_missing_blob_nulls_only_its_rows(tmp_path: Path):
    service = build_service(tmp_path)
    run_id = build_run(service, tmp_path)
    pipeline = EtlPipeline(service, tmp_path / "etl")
    before = tables_by_name(pipeline.run_pipeline(run_id, default_definitions()))
    (carryover,) = [
        record
        for record in service.query_records(run_id, RecordFilter(kind="sqd_artifact", iteration=1))
        if record.payload["artifact"] == "carryover"
    ]

    service.blobs.path_for(carryover.blob_refs[0].digest).unlink()
    after = tables_by_name(pipeline.run_pipeline(run_id, default_definitions()))

    assert after["carryover_acquisition"].values() == [None, None]
    assert after["hamming_to_rhf"].values() == [1.0, None]
    assert after["hamming_to_rhf"].rows[1].provenance[0].startswith("missing:carryover@")
    assert after["hamming_to_rhf"].rows[0] == before["hamming_to_rhf"].rows[0]
    for name in ("parameter_convergence", "sample_preservation", "avg_occupancy", "trial_energy"):
        assert after[name].export_digest() == before[name].export_digest()


def test_pipeline_needs_a_completed_run(tmp_path: Path):
    service = build_service(tmp_path)
    run_id = build_run(service, tmp_path, finish=False)

    with pytest.raises(RunStateError):
        EtlPipeline(service, tmp_path / "etl").run_pipeline(run_id, default_definitions())


def test_pipeline_lock_is_exclusive(tmp_path: Path):
    service = build_service(tmp_path)
    run_id = build_run(service, tmp_path)
    pipeline = EtlPipeline(service, tmp_path / "etl")
    lock = pipeline.run_directory(run_id) / ".lock"
    lock.parent.mkdir(parents=True)

    fd = os.open(lock, os.O_RDWR | os.O_CREAT, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        with pytest.raises(PipelineLockedError):
            pipeline.run_pipeline(run_id, default_definitions())
    finally:
        os.close(fd)

    assert pipeline.run_pipeline(run_id, default_definitions())


def test_pipeline_over_a_closed_loop_run(tmp_path: Path):
    service = build_service(tmp_path)
    handle = build_handle(service, tmp_path, name="hubbard4")
    run_closed_loop(
        hubbard_spec(4),
        DEConfig(generations=3, master_seed=5),
        SamplerModel(bitflip=0.05, shots=500),
        handle,
        scheduler=JobScheduler(SchedulerModel.deterministic()),
        subspace=SubspaceSettings(d_max=36, k_max=6),
    )
    assert handle.finish().complete

    tables = tables_by_name(EtlPipeline(service, tmp_path / "etl").run_pipeline(handle.run_id, default_definitions()))

    assert len(tables["qpu_usage"].rows) == len(tables["hpc_walltime"].rows) == 12
    assert tables["hpc_walltime"].values() == [600.0] * 12
    assert tables["qpu_queueing"].values() == [0.0] * 12
    assert tables["carryover_acquisition"].values()[0] is None
    for name in ("hamming_to_rhf", "parameter_convergence", "sample_preservation", "shot_retention"):
        assert all(value is not None for value in tables[name].values()), name
    assert all(0.0 <= value <= 1.0 for value in tables["sample_preservation"].values())
    tasks = {row.component for row in tables["task_duration"].rows}
    assert tasks == {"run_primitive", "recover_configurations", "solve_eigenstate"}
