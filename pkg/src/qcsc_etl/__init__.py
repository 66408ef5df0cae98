"""Server-side ETL: metric definitions, the pipeline and report bundles."""

from .definitions import MetricDefinition, default_definitions  # noqa: F401
from .errors import MetricInputError, PipelineLockedError  # noqa: F401
from .extract import RunData  # noqa: F401
from .metrics import (  # noqa: F401
    avg_occupancy,
    carryover_acquisition,
    hamming_to_rhf,
    histogram,
    parameter_convergence,
    sample_preservation,
    shot_retention,
)
from .pipeline import EtlPipeline  # noqa: F401
from .registry import MetricRegistry, default_registry  # noqa: F401
from .report import PANELS, ReportResult, build_report  # noqa: F401
from .table import MetricRow, MetricTable  # noqa: F401

__all__ = [
    "EtlPipeline",
    "MetricDefinition",
    "MetricInputError",
    "MetricRegistry",
    "MetricRow",
    "MetricTable",
    "PANELS",
    "PipelineLockedError",
    "ReportResult",
    "RunData",
    "avg_occupancy",
    "build_report",
    "carryover_acquisition",
    "default_definitions",
    "default_registry",
    "hamming_to_rhf",
    "histogram",
    "parameter_convergence",
    "sample_preservation",
    "shot_retention",
]
