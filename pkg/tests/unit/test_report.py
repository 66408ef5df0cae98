import json
import math
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from qcsc_etl import PANELS, EtlPipeline, build_report, default_registry
from qcsc_etl.report import feasible_runs
from qcsc_obs_client import ClientSettings, start_run
from qcsc_obs_server import ObservabilityService, RecordFilter
from qcsc_obs_server.app import create_app
from qcsc_sched import JobScheduler, SchedulerModel
from qcsc_sqd import DEConfig, SamplerModel, hubbard_spec, run_closed_loop
from qcsc_sqd.loop import SubspaceSettings


def build_completed_run(service: ObservabilityService, tmp_path: Path, seed: int, config=None) -> str:
    client = TestClient(create_app(service))
    settings = ClientSettings(spool_dir=tmp_path / "spool", flush_interval=60.0)
    handle = start_run("http://testserver", "hubbard4", config or {"seed": seed}, settings=settings, http=client)
    run_closed_loop(
        hubbard_spec(4),
        DEConfig(generations=2, master_seed=seed),
        SamplerModel(bitflip=0.05, shots=400),
        handle,
        scheduler=JobScheduler(SchedulerModel.deterministic()),
        subspace=SubspaceSettings(d_max=36, k_max=6),
    )
    assert handle.finish().complete
    return handle.run_id


def read_panel(path: Path):
    lines = path.read_text().splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:]]


def test_report_overlays_two_runs(tmp_path: Path):
    service = ObservabilityService(tmp_path / "data")
    run_ids = [build_completed_run(service, tmp_path, seed) for seed in (1, 2)]
    pipeline = EtlPipeline(service, tmp_path / "etl")
    for run_id in run_ids:
        pipeline.run_pipeline(run_id, default_registry().select())

    result = build_report(service, run_ids, etl_dir=tmp_path / "etl", out_dir=tmp_path / "report")

    assert result.absent == []
    manifest = json.loads((tmp_path / "report" / "manifest.json").read_text())
    assert manifest == result.manifest
    assert set(manifest["panels"]) == {panel.name for panel in PANELS}
    energy = read_panel(result.panel_paths["energy"])
    assert {row["run_id"] for row in energy} == set(run_ids)
    assert {row["metric"] for row in energy} == {"trial_energy", "accepted_energy"}
    for run_id in run_ids:
        summary = manifest["runs"][run_id]
        assert summary["status"] == "completed"
        trials = [float(row["value"]) for row in energy if (row["run_id"], row["metric"]) == (run_id, "trial_energy")]
        assert summary["min_energy"] == min(trials)


def test_usage_panel_uses_quota_formula(tmp_path: Path):
    service = ObservabilityService(tmp_path / "data")
    run_id = build_completed_run(service, tmp_path, 3)
    EtlPipeline(service, tmp_path / "etl").run_pipeline(run_id, default_registry().select())

    result = build_report(service, [run_id], etl_dir=tmp_path / "etl", out_dir=tmp_path / "report")

    used = math.fsum(
        record.payload["usage_s"] for record in service.query_records(run_id, RecordFilter(kind="qpu_job"))
    )
    (qpu,) = read_panel(result.panel_paths["qpu_usage"])
    assert int(qpu["jobs"]) == 8
    assert float(qpu["quota"]) == 60000.0
    assert float(qpu["usage_pct"]) == pytest.approx(used / 60000 * 100)
    assert int(qpu["feasible_runs"]) == math.floor(100 / (used / 60000 * 100))
    (hpc,) = read_panel(result.panel_paths["hpc_usage"])
    # 64 nodes for 600 s at one token per node-hour
    assert float(hpc["used"]) == pytest.approx(8 * 64 * 600 / 3600)
    assert float(hpc["usage_pct"]) == pytest.approx(float(hpc["used"]) / 8640 * 100)


def test_quota_comes_from_run_configuration(tmp_path: Path):
    service = ObservabilityService(tmp_path / "data")
    config = {"scheduler": {"quota": {"qpu_seconds": 1000.0, "hpc_tokens": 100.0}}}
    run_id = build_completed_run(service, tmp_path, 4, config=config)
    EtlPipeline(service, tmp_path / "etl").run_pipeline(run_id, default_registry().select(["qpu_usage", "hpc_tokens"]))

    result = build_report(service, [run_id], etl_dir=tmp_path / "etl", out_dir=tmp_path / "report")

    (qpu,) = read_panel(result.panel_paths["qpu_usage"])
    (hpc,) = read_panel(result.panel_paths["hpc_usage"])
    assert float(qpu["quota"]) == 1000.0
    assert float(hpc["quota"]) == 100.0


def test_task_durations_rank_simulated_jobs_first(tmp_path: Path):
    service = ObservabilityService(tmp_path / "data")
    run_id = build_completed_run(service, tmp_path, 5)
    EtlPipeline(service, tmp_path / "etl").run_pipeline(
        run_id, default_registry().select(["task_duration", "task_effective_duration"])
    )

    result = build_report(service, [run_id], etl_dir=tmp_path / "etl", out_dir=tmp_path / "report")

    rows = read_panel(result.panel_paths["task_durations"])
    assert [row["task"] for row in rows] == ["solve_eigenstate", "run_primitive", "recover_configurations"]
    assert float(rows[0]["effective_s"]) >= 8 * 600


def test_missing_tables_mark_panels_absent(tmp_path: Path):
    service = ObservabilityService(tmp_path / "data")
    run_id = build_completed_run(service, tmp_path, 6)
    EtlPipeline(service, tmp_path / "etl").run_pipeline(run_id, default_registry().select(["trial_energy"]))

    result = build_report(service, [run_id], etl_dir=tmp_path / "etl", out_dir=tmp_path / "report")

    assert "energy" not in result.absent
    assert {"qpu_usage", "hpc_walltime", "occupancy", "hamming_distance"} <= set(result.absent)
    energy = result.manifest["panels"]["energy"]
    assert energy["status"] == "present"
    assert energy["missing"] == [f"{run_id}:accepted_energy"]
    assert not (tmp_path / "report" / "panels" / "qpu_usage.tsv").exists()


def test_report_needs_runs(tmp_path: Path):
    service = ObservabilityService(tmp_path / "data")

    with pytest.raises(ValueError):
        build_report(service, [], etl_dir=tmp_path / "etl", out_dir=tmp_path / "report")


def test_feasible_runs():
    assert feasible_runs(0.5) == 200
    assert feasible_runs(30.0) == 3
    assert feasible_runs(0.0) is None
    assert feasible_runs(None) is None


def test_plots_are_rendered_as_svg(tmp_path: Path):
    pytest.importorskip("matplotlib")
    service = ObservabilityService(tmp_path / "data")
    run_id = build_completed_run(service, tmp_path, 7)
    EtlPipeline(service, tmp_path / "etl").run_pipeline(run_id, default_registry().select())

    result = build_report(service, [run_id], etl_dir=tmp_path / "etl", out_dir=tmp_path / "report", plots=True)

    assert set(result.plot_paths) == {panel.name for panel in PANELS}
    for path in result.plot_paths.values():
        assert path.read_text().lstrip().startswith("<?xml")
    assert result.manifest["panels"]["energy"]["plot"] == "plots/energy.svg"
