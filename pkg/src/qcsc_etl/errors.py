"""ETL errors."""

from __future__ import annotations


class MetricInputError(ValueError):
    """A metric was handed inputs it is not defined on."""


class PipelineLockedError(RuntimeError):
    """Another pipeline instance holds the run's lock."""

    def __init__(self, run_id: str) -> None:
        super().__init__(f"an ETL pipeline is already running for run {run_id}")
        self.run_id = run_id
