from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from qcsc_sched import (
    HPC_TOKENS,
    QPU_SECONDS,
    DelayModel,
    HpcJobRecord,
    IncompleteJobError,
    JobScheduler,
    QuotaExceededError,
    QuotaLedger,
    SchedulerModel,
    SimClock,
    qpu_row,
    qstat_row,
)
from qcsc_telemetry.canonical import parse_timestamp


def build_scheduler(**overrides) -> JobScheduler:
    return JobScheduler(SchedulerModel.deterministic(**overrides))


def test_qpu_job_times_follow_the_model():
    scheduler = build_scheduler(qpu_queue=DelayModel.constant(60.0), qpu_usage_fraction=(0.5, 0.5))

    result, record = scheduler.submit_qpu(lambda: "samples", np.random.default_rng(0), shots=10000)

    assert result == "samples"
    assert record.queueing_s == pytest.approx(60.0)
    assert record.wall_clock_s == pytest.approx(300.0)
    assert record.usage_s == pytest.approx(150.0)
    assert record.job_id == "qpu-000001"
    assert scheduler.ledger.used(QPU_SECONDS) == pytest.approx(150.0)


def test_qpu_row_round_trips_through_timestamps():
    scheduler = build_scheduler()
    submit_at = datetime(2025, 3, 1, 8, 30, tzinfo=timezone.utc)

    _, record = scheduler.submit_qpu(
        lambda: None, np.random.default_rng(1), shots=500, submit_at=submit_at, job_id="qpu-g000-p0"
    )
    row = qpu_row(record)

    assert row["job_id"] == "qpu-g000-p0"
    assert parse_timestamp(row["created_at"]) == submit_at
    assert parse_timestamp(row["ended_at"]) - parse_timestamp(row["started_at"]) == timedelta(seconds=300)
    assert row["usage_s"] <= 300.0


def test_hpc_job_row_uses_batch_system_names():
    scheduler = build_scheduler(hpc_queue=DelayModel.constant(120.0), vmem_sigma=0.0)

    _, record = scheduler.submit_hpc(lambda: None, np.random.default_rng(2), dimension=1000)
    row = qstat_row(record)

    assert set(row) >= {"job_id", "etime", "stime", "walltime", "resources_used.vmem", "resources_used.cpupercent"}
    assert record.queueing_s == pytest.approx(120.0)
    assert row["walltime"] == pytest.approx(600.0)
    assert row["resources_used.vmem"] == 4 * 2**30 + 256 * 2**10 * 1000
    assert record.ended_at == record.stime + timedelta(seconds=600)


def test_hpc_cpupercent_stays_within_partition():
    model = SchedulerModel.deterministic()
    scheduler = JobScheduler(model)
    rng = np.random.default_rng(3)

    records = [scheduler.submit_hpc(lambda: None, rng)[1] for _ in range(50)]

    for record in records:
        utilisation = record.cpupercent / model.max_cpupercent
        assert 0.28 - 1e-4 <= utilisation <= 0.35 + 1e-4
    assert model.total_cores == 7168


def test_hpc_cpupercent_grows_with_subspace_dimension():
    model = SchedulerModel.deterministic(cpu_gain_per_decade=0.05)
    scheduler = JobScheduler(model)

    def mean_utilisation(dimension: int) -> float:
        rng = np.random.default_rng(5)
        records = [scheduler.submit_hpc(lambda: None, rng, dimension=dimension)[1] for _ in range(40)]
        return float(np.mean([record.cpupercent for record in records])) / model.max_cpupercent

    small, large = mean_utilisation(10), mean_utilisation(10**6)

    # same draws, five more decades
    assert large - small == pytest.approx(0.25, abs=1e-3)
    saturated = JobScheduler(SchedulerModel.deterministic(cpu_gain_per_decade=1.0))
    _, record = saturated.submit_hpc(lambda: None, np.random.default_rng(6), dimension=10**6)
    assert record.cpupercent == saturated.model.max_cpupercent


def test_hpc_tokens_are_node_hours_times_rate():
    model = SchedulerModel.deterministic(hpc_nodes=4, token_rate=2.0)
    scheduler = JobScheduler(model)

    _, record = scheduler.submit_hpc(lambda: None, np.random.default_rng(4))

    # 4 nodes for 600 s at rate 2
    assert record.tokens == pytest.approx(4 * (600 / 3600) * 2.0)
    assert scheduler.ledger.used(HPC_TOKENS) == pytest.approx(record.tokens)


def test_quota_exhaustion_refuses_job_before_running_it():
    scheduler = build_scheduler(qpu_seconds=200.0, qpu_usage_fraction=(0.5, 0.5))
    calls = []

    scheduler.submit_qpu(lambda: calls.append(1), np.random.default_rng(5), shots=1)
    with pytest.raises(QuotaExceededError) as excinfo:
        scheduler.submit_qpu(lambda: calls.append(2), np.random.default_rng(5), shots=1)

    assert calls == [1]
    assert excinfo.value.resource == QPU_SECONDS
    assert excinfo.value.remaining == pytest.approx(50.0)
    assert scheduler.ledger.remaining(QPU_SECONDS) == pytest.approx(50.0)


def test_ledger_is_consistent_under_concurrency():
    ledger = QuotaLedger({QPU_SECONDS: 1000.0})

    def debit(_):
        try:
            ledger.debit(QPU_SECONDS, 3.0)
            return True
        except QuotaExceededError:
            return False

    with ThreadPoolExecutor(max_workers=8) as pool:
        granted = sum(pool.map(debit, range(500)))

    assert granted == 333
    assert ledger.used(QPU_SECONDS) == pytest.approx(999.0)
    assert ledger.remaining(QPU_SECONDS) >= 0
    with pytest.raises(ValueError):
        ledger.debit(QPU_SECONDS, -1.0)
    with pytest.raises(KeyError):
        ledger.debit("gpu_hours", 1.0)


def test_sim_clock_never_moves_backwards():
    epoch = datetime(2025, 1, 1, tzinfo=timezone.utc)
    clock = SimClock(epoch)

    clock.advance_to(epoch + timedelta(hours=1))
    clock.advance_to(epoch)

    assert clock.now() == epoch + timedelta(hours=1)


def test_timing_draws_are_seeded():
    model = SchedulerModel()

    first = JobScheduler(model).submit_qpu(lambda: None, np.random.default_rng(9), shots=1)[1]
    second = JobScheduler(model).submit_qpu(lambda: None, np.random.default_rng(9), shots=1)[1]

    assert first == second


def test_incomplete_hpc_job_has_no_row():
    record = HpcJobRecord(
        job_id="1.hpc-sim",
        etime=datetime(2025, 1, 1, tzinfo=timezone.utc),
        stime=None,
        walltime=None,
        vmem=None,
        cpupercent=10,
        nodes=1,
    )

    with pytest.raises(IncompleteJobError):
        qstat_row(record)


@pytest.mark.parametrize(
    "overrides",
    [
        {"qpu_seconds": 0.0},
        {"hpc_nodes": 0},
        {"cpu_utilisation": (0.5, 0.2)},
        {"cpu_gain_per_decade": -0.01},
        {"epoch": datetime(2025, 1, 1)},
    ],
)
def test_invalid_models_are_rejected(overrides):
    with pytest.raises(ValueError):
        SchedulerModel(**overrides)


def test_delay_model_from_dict():
    assert DelayModel.from_dict({"kind": "constant", "value": 5}) == DelayModel.constant(5.0)
    assert DelayModel.from_dict({"median": 10, "sigma": 0.2}) == DelayModel.lognormal(10.0, 0.2)
    with pytest.raises(ValueError):
        DelayModel(kind="uniform")
