"""Static report bundles over one or more runs.

Bundle layout::

    <out>/manifest.json          panels, their sources and per-run summaries
    <out>/panels/<panel>.tsv     one dataset per panel, all runs overlaid
    <out>/plots/<panel>.svg      only with ``plots=True`` and matplotlib present

Panels read the metric tables the ETL pipeline wrote; a panel whose tables are
missing for every run is listed as absent in the manifest.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from qcsc_obs_server.service import ObservabilityService

from .extract import MissingInput, RunData
from .metrics import histogram
from .pipeline import EtlPipeline
from .table import MetricRow, MetricTable, format_value

LOG = logging.getLogger(__name__)

DEFAULT_QPU_SECONDS = 60000.0
DEFAULT_HPC_TOKENS = 8640.0
DEFAULT_HPC_NODES = 64
DEFAULT_CORES_PER_NODE = 112

SERIES = "series"
OCCUPANCY = "occupancy"
HISTOGRAM = "histogram"
USAGE = "usage"
DURATIONS = "durations"


@dataclass(frozen=True)
class Panel:
    name: str
    title: str
    kind: str
    metrics: Tuple[str, ...]
    unit: str = ""
    quota: Optional[str] = None


DOMAIN_PANELS: Tuple[Panel, ...] = (
    Panel("energy", "Energy per iteration", SERIES, ("trial_energy", "accepted_energy"), "Ha"),
    Panel("carryover_acquisition", "New carryover strings", SERIES, ("carryover_acquisition",)),
    Panel("parameter_convergence", "Mean pairwise parameter distance", SERIES, ("parameter_convergence",)),
    Panel("hamming_distance", "Mean Hamming distance of carryover to RHF", SERIES, ("hamming_to_rhf",)),
    Panel(
        "sample_preservation",
        "Recovery overlap (sample_preservation) and post-selection (shot_retention)",
        SERIES,
        ("sample_preservation", "shot_retention"),
    ),
    Panel("occupancy", "Average spatial-orbital occupancy", OCCUPANCY, ("avg_occupancy",)),
)

PERFORMANCE_PANELS: Tuple[Panel, ...] = (
    Panel("qpu_usage", "QPU usage of quota", USAGE, ("qpu_usage",), "s", quota="qpu_seconds"),
    Panel("qpu_queueing", "QPU queueing time", HISTOGRAM, ("qpu_queueing",), "s"),
    Panel("qpu_wall_clock", "QPU wall-clock time", HISTOGRAM, ("qpu_wall_clock",), "s"),
    Panel("hpc_usage", "HPC token usage of quota", USAGE, ("hpc_tokens",), "tokens", quota="hpc_tokens"),
    Panel("hpc_queueing", "HPC queueing time (stime - etime)", HISTOGRAM, ("hpc_queueing",), "s"),
    Panel("hpc_walltime", "HPC walltime", HISTOGRAM, ("hpc_walltime",), "s"),
    Panel("hpc_vmem", "HPC resources_used.vmem", HISTOGRAM, ("hpc_vmem",), "bytes"),
    Panel("hpc_cpupercent", "HPC resources_used.cpupercent", HISTOGRAM, ("hpc_cpupercent",), "%"),
    Panel(
        "task_durations",
        "Total duration per task",
        DURATIONS,
        ("task_duration", "task_effective_duration"),
        "s",
    ),
)

PANELS: Tuple[Panel, ...] = DOMAIN_PANELS + PERFORMANCE_PANELS


@dataclass
class ReportResult:
    """Result of a report rendering."""

    out_dir: Path
    manifest: Dict[str, Any]
    panel_paths: Dict[str, Path] = field(default_factory=dict)
    plot_paths: Dict[str, Path] = field(default_factory=dict)

    @property
    def absent(self) -> List[str]:
        return [name for name, entry in self.manifest["panels"].items() if entry["status"] == "absent"]


def _tsv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_cell(value) for value in row))
    return "\n".join(lines) + "\n"


def _cell(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, float):
        return format_value(value)
    return str(value)


def _quota(config: Mapping[str, Any], name: str, default: float) -> float:
    scheduler = config.get("scheduler") or {}
    quota = scheduler.get("quota") or {}
    try:
        value = float(quota.get(name, default))
    except (TypeError, ValueError):
        return default
    return value if value > 0 else default


def feasible_runs(usage_pct: Optional[float]) -> Optional[int]:
    """How many identical executions fit in the quota."""

    if usage_pct is None or usage_pct <= 0:
        return None
    return math.floor(100.0 / usage_pct)


class ReportBuilder:
    """Render the panel datasets of a report bundle."""

    def __init__(
        self,
        service: ObservabilityService,
        etl_dir: Path,
        out_dir: Path,
        *,
        plots: bool = False,
    ) -> None:
        self._service = service
        self._pipeline = EtlPipeline(service, etl_dir)
        self._out_dir = Path(out_dir)
        self._plots = plots

    def build(self, run_ids: Sequence[str]) -> ReportResult:
        if not run_ids:
            raise ValueError("a report needs at least one run")
        run_ids = list(dict.fromkeys(run_ids))
        tables = {run_id: self._tables(run_id) for run_id in run_ids}
        runs = {run_id: RunData.load(self._service, run_id) for run_id in run_ids}
        configs = {run_id: data.config() for run_id, data in runs.items()}

        panel_dir = self._out_dir / "panels"
        panel_dir.mkdir(parents=True, exist_ok=True)
        result = ReportResult(out_dir=self._out_dir, manifest={})
        panels: Dict[str, Any] = {}
        datasets: Dict[str, Tuple[Sequence[str], List[List[Any]]]] = {}
        for panel in PANELS:
            sources = {
                run_id: [tables[run_id][name] for name in panel.metrics if name in tables[run_id]]
                for run_id in run_ids
            }
            entry: Dict[str, Any] = {
                "title": panel.title,
                "kind": panel.kind,
                "unit": panel.unit,
                "metrics": list(panel.metrics),
                "runs": [run_id for run_id in run_ids if sources[run_id]],
                "missing": sorted(
                    f"{run_id}:{name}"
                    for run_id in run_ids
                    for name in panel.metrics
                    if name not in tables[run_id]
                ),
            }
            if not any(sources.values()):
                entry["status"] = "absent"
                panels[panel.name] = entry
                LOG.warning("report panel %s is absent: no metric tables", panel.name)
                continue
            header, rows = self._render(panel, sources, configs)
            path = panel_dir / f"{panel.name}.tsv"
            path.write_text(_tsv(header, rows), encoding="utf-8")
            entry.update({"status": "present", "file": f"panels/{path.name}", "columns": list(header)})
            panels[panel.name] = entry
            result.panel_paths[panel.name] = path
            datasets[panel.name] = (header, rows)

        result.manifest = {
            "layout": {
                "manifest": "manifest.json",
                "panels": "panels/<panel>.tsv",
                "plots": "plots/<panel>.svg",
            },
            "runs": {
                run_id: self._summary(runs[run_id], tables[run_id], configs[run_id])
                for run_id in run_ids
            },
            "panels": panels,
        }
        if self._plots:
            result.plot_paths = self._render_plots(datasets)
            for name, path in result.plot_paths.items():
                panels[name]["plot"] = f"plots/{path.name}"
        manifest_path = self._out_dir / "manifest.json"
        manifest_path.write_text(
            json.dumps(result.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        LOG.info(
            "report over %d run(s) written to %s (%d panel(s) absent)",
            len(run_ids),
            self._out_dir,
            len(result.absent),
        )
        return result

    def _tables(self, run_id: str) -> Dict[str, MetricTable]:
        # the highest version of each metric wins
        latest: Dict[str, MetricTable] = {}
        for table in self._pipeline.load_tables(run_id):
            current = latest.get(table.name)
            if current is None or table.version > current.version:
                latest[table.name] = table
        return latest

    # ------------------------------------------------------------------
    # Panels
    # ------------------------------------------------------------------
    def _render(
        self,
        panel: Panel,
        sources: Mapping[str, List[MetricTable]],
        configs: Mapping[str, Mapping[str, Any]],
    ) -> Tuple[Sequence[str], List[List[Any]]]:
        if panel.kind == SERIES:
            return self._render_series(sources)
        if panel.kind == OCCUPANCY:
            return self._render_occupancy(sources)
        if panel.kind == HISTOGRAM:
            return self._render_histogram(sources)
        if panel.kind == USAGE:
            return self._render_usage(panel, sources, configs)
        return self._render_durations(sources)

    @staticmethod
    def _render_series(sources: Mapping[str, List[MetricTable]]):
        header = ("run_id", "metric", "iteration", "population", "value")
        rows = [
            [run_id, table.name, row.iteration, row.population, row.value]
            for run_id, tables in sources.items()
            for table in tables
            for row in table.rows
        ]
        return header, rows

    @staticmethod
    def _render_occupancy(sources: Mapping[str, List[MetricTable]]):
        header = ("run_id", "iteration", "orbital", "occupancy")
        rows = [
            [run_id, row.iteration, int(row.component), row.value]
            for run_id, tables in sources.items()
            for table in tables
            for row in table.rows
            if row.component is not None
        ]
        return header, rows

    @staticmethod
    def _render_histogram(sources: Mapping[str, List[MetricTable]]):
        header = ("run_id", "bin_low", "bin_high", "count")
        rows: List[List[Any]] = []
        for run_id, tables in sources.items():
            values = [row.value for table in tables for row in table.rows if row.value is not None]
            counts, edges = histogram(values)
            for k, count in enumerate(counts):
                rows.append([run_id, float(edges[k]), float(edges[k + 1]), int(count)])
        return header, rows

    @staticmethod
    def _render_usage(
        panel: Panel,
        sources: Mapping[str, List[MetricTable]],
        configs: Mapping[str, Mapping[str, Any]],
    ):
        header = ("run_id", "jobs", "used", "quota", "usage_pct", "feasible_runs")
        default = DEFAULT_QPU_SECONDS if panel.quota == "qpu_seconds" else DEFAULT_HPC_TOKENS
        rows = []
        for run_id, tables in sources.items():
            values = [row.value for table in tables for row in table.rows if row.value is not None]
            quota = _quota(configs[run_id], panel.quota or "", default)
            used = math.fsum(values)
            usage_pct = used / quota * 100.0
            rows.append([run_id, len(values), used, quota, usage_pct, feasible_runs(usage_pct)])
        return header, rows

    @staticmethod
    def _render_durations(sources: Mapping[str, List[MetricTable]]):
        header = ("run_id", "task", "measured_s", "effective_s")
        rows = []
        for run_id, tables in sources.items():
            totals: Dict[str, Dict[str, float]] = defaultdict(lambda: defaultdict(float))
            for table in tables:
                for row in table.rows:
                    if row.component is not None and row.value is not None:
                        totals[row.component][table.name] += row.value
            ranked = sorted(
                totals.items(),
                key=lambda item: (-item[1].get("task_effective_duration", 0.0), item[0]),
            )
            for task, values in ranked:
                rows.append(
                    [
                        run_id,
                        task,
                        values.get("task_duration", 0.0),
                        values.get("task_effective_duration", 0.0),
                    ]
                )
        return header, rows

    # ------------------------------------------------------------------
    # Summary
    # ------------------------------------------------------------------
    @staticmethod
    def _summary(
        data: RunData, tables: Mapping[str, MetricTable], config: Mapping[str, Any]
    ) -> Dict[str, Any]:
        summary: Dict[str, Any] = {"name": data.manifest.name, "status": data.manifest.status.value}

        energies = [
            row for row in _rows(tables, "trial_energy") if row.value is not None
        ]
        if energies:
            best = min(energies, key=lambda row: (row.value, row.iteration or 0, row.population or 0))
            summary.update(
                {
                    "min_energy": best.value,
                    "min_energy_iteration": best.iteration,
                    "min_energy_population": best.population,
                }
            )

        try:
            lumo = int(data.problem()["n_alpha"])
        except (MissingInput, KeyError, TypeError, ValueError):
            lumo = None
        occupancy = [row for row in _rows(tables, "avg_occupancy") if row.component is not None]
        if lumo is not None and occupancy:
            last = max(row.iteration or 0 for row in occupancy)
            for row in occupancy:
                if row.iteration == last and int(row.component) == lumo:
                    summary["lumo_orbital"] = lumo
                    summary["final_lumo_occupancy"] = row.value

        qpu_used = math.fsum(row.value for row in _rows(tables, "qpu_usage") if row.value is not None)
        hpc_used = math.fsum(row.value for row in _rows(tables, "hpc_tokens") if row.value is not None)
        qpu_quota = _quota(config, "qpu_seconds", DEFAULT_QPU_SECONDS)
        hpc_quota = _quota(config, "hpc_tokens", DEFAULT_HPC_TOKENS)
        summary.update(
            {
                "qpu_seconds_used": qpu_used,
                "qpu_usage_pct": qpu_used / qpu_quota * 100.0,
                "hpc_tokens_used": hpc_used,
                "hpc_usage_pct": hpc_used / hpc_quota * 100.0,
                "feasible_runs": _min_feasible(
                    feasible_runs(qpu_used / qpu_quota * 100.0),
                    feasible_runs(hpc_used / hpc_quota * 100.0),
                ),
            }
        )

        scheduler = config.get("scheduler") or {}
        total_cores = int(scheduler.get("hpc_nodes", DEFAULT_HPC_NODES)) * int(
            scheduler.get("cores_per_node", DEFAULT_CORES_PER_NODE)
        )
        cpu = [row.value for row in _rows(tables, "hpc_cpupercent") if row.value is not None]
        if cpu and total_cores:
            summary["hpc_total_cores"] = total_cores
            summary["mean_cpu_utilisation"] = math.fsum(cpu) / len(cpu) / (total_cores * 100.0)
        return summary

    # ------------------------------------------------------------------
    # Plots
    # ------------------------------------------------------------------
    def _render_plots(
        self, datasets: Mapping[str, Tuple[Sequence[str], List[List[Any]]]]
    ) -> Dict[str, Path]:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            LOG.warning("matplotlib is not installed; skipping plots")
            return {}
        plot_dir = self._out_dir / "plots"
        plot_dir.mkdir(parents=True, exist_ok=True)
        # a fixed hash salt keeps the SVG output stable between renders
        matplotlib.rcParams["svg.hashsalt"] = "qcsc-report"
        paths: Dict[str, Path] = {}
        for panel in PANELS:
            if panel.name not in datasets:
                continue
            header, rows = datasets[panel.name]
            fig, ax = plt.subplots(figsize=(6.4, 4.0))
            try:
                self._plot(ax, panel, header, rows)
                ax.set_title(panel.title)
                path = plot_dir / f"{panel.name}.svg"
                fig.tight_layout()
                fig.savefig(path, format="svg", metadata={"Date": None})
                paths[panel.name] = path
            finally:
                plt.close(fig)
        return paths

    @staticmethod
    def _plot(ax, panel: Panel, header: Sequence[str], rows: List[List[Any]]) -> None:
        column = {name: k for k, name in enumerate(header)}
        if panel.kind == SERIES:
            lines: Dict[Tuple[str, str, Any], List[Tuple[int, float]]] = defaultdict(list)
            for row in rows:
                if row[column["value"]] is None or row[column["iteration"]] is None:
                    continue
                key = (row[column["run_id"]][:8], row[column["metric"]], row[column["population"]])
                lines[key].append((row[column["iteration"]], row[column["value"]]))
            for (run, metric, population), points in sorted(lines.items(), key=lambda item: str(item[0])):
                xs, ys = zip(*sorted(points))
                label = f"{run} {metric}" + ("" if population is None else f" i={population}")
                ax.plot(xs, ys, marker="o", markersize=3, label=label)
            ax.set_xlabel("iteration")
            ax.set_ylabel(panel.unit or "value")
            if len(lines) <= 12:
                ax.legend(fontsize="x-small")
        elif panel.kind == OCCUPANCY:
            by_run: Dict[str, Dict[int, Dict[int, float]]] = defaultdict(lambda: defaultdict(dict))
            for run_id, iteration, orbital, value in rows:
                by_run[run_id][iteration][orbital] = value
            run_id = sorted(by_run)[0]
            grid = by_run[run_id]
            iterations = sorted(grid)
            orbitals = sorted({p for values in grid.values() for p in values})
            image = [[grid[g].get(p, 0.0) for g in iterations] for p in orbitals]
            mesh = ax.imshow(image, aspect="auto", origin="lower", vmin=0.0, vmax=2.0)
            ax.figure.colorbar(mesh, ax=ax)
            ax.set_xlabel("iteration")
            ax.set_ylabel("orbital")
        elif panel.kind == HISTOGRAM:
            for run_id in sorted({row[0] for row in rows}):
                selected = [row for row in rows if row[0] == run_id]
                ax.stairs(
                    [row[3] for row in selected],
                    [selected[0][1]] + [row[2] for row in selected],
                    label=run_id[:8],
                )
            ax.set_xlabel(panel.unit)
            ax.set_ylabel("jobs")
            ax.legend(fontsize="x-small")
        elif panel.kind == USAGE:
            ax.bar([row[0][:8] for row in rows], [row[4] for row in rows])
            ax.set_ylabel("% of quota")
        else:
            tasks = sorted({row[1] for row in rows})
            for offset, run_id in enumerate(sorted({row[0] for row in rows})):
                values = {row[1]: row[3] for row in rows if row[0] == run_id}
                ax.barh(
                    [k + 0.4 * offset for k in range(len(tasks))],
                    [values.get(task, 0.0) for task in tasks],
                    height=0.4,
                    label=run_id[:8],
                )
            ax.set_yticks(range(len(tasks)), tasks)
            ax.set_xlabel("effective seconds")
            ax.legend(fontsize="x-small")


def _rows(tables: Mapping[str, MetricTable], name: str) -> Sequence[MetricRow]:
    table = tables.get(name)
    return table.rows if table is not None else ()


def _min_feasible(*values: Optional[int]) -> Optional[int]:
    present = [value for value in values if value is not None]
    return min(present) if present else None


def build_report(
    service: ObservabilityService,
    run_ids: Sequence[str],
    *,
    etl_dir: Path,
    out_dir: Path,
    plots: bool = False,
) -> ReportResult:
    return ReportBuilder(service, etl_dir, out_dir, plots=plots).build(run_ids)
