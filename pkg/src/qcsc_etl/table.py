"""Metric tables and their byte-stable text export."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

NULL = "null"
HEADER = ("run_id", "iteration", "population", "component", "value", "provenance")

RowKey = Tuple[str, int, int, str]


def format_value(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return NULL
    return format(float(value), ".17g")


def _format_index(value: Optional[int]) -> str:
    return NULL if value is None else str(int(value))


def _parse_index(text: str) -> Optional[int]:
    return None if text == NULL else int(text)


@dataclass(frozen=True)
class MetricRow:
    """One value of a metric.

    ``component`` distinguishes several values under the same iteration and
    population key, such as orbitals of an occupation vector or task names.
    ``provenance`` lists the record ids and blob digests the value came from,
    or a ``missing:`` note when an input could not be found.
    """

    run_id: str
    iteration: Optional[int] = None
    population: Optional[int] = None
    value: Optional[float] = None
    component: Optional[str] = None
    provenance: Tuple[str, ...] = ()

    @property
    def sort_key(self) -> RowKey:
        # None sorts first within each column
        return (
            self.run_id,
            -1 if self.iteration is None else self.iteration,
            -1 if self.population is None else self.population,
            self.component or "",
        )

    def render(self) -> str:
        return "\t".join(
            (
                self.run_id,
                _format_index(self.iteration),
                _format_index(self.population),
                self.component if self.component is not None else NULL,
                format_value(self.value),
                ",".join(sorted(set(self.provenance))) or NULL,
            )
        )


@dataclass
class MetricTable:
    name: str
    version: int
    rows: List[MetricRow] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.rows = sorted(self.rows, key=lambda row: row.sort_key)
        keys = [row.sort_key for row in self.rows]
        if len(keys) != len(set(keys)):
            raise ValueError(f"metric table {self.key} holds more than one row per key")

    @property
    def key(self) -> str:
        return f"{self.name}.v{self.version}"

    @property
    def filename(self) -> str:
        return f"{self.key}.tsv"

    def export(self) -> bytes:
        lines = [f"# metric={self.name} version={self.version}", "\t".join(HEADER)]
        lines.extend(row.render() for row in self.rows)
        return ("\n".join(lines) + "\n").encode("utf-8")

    def export_digest(self) -> str:
        return hashlib.sha256(self.export()).hexdigest()

    def values(self) -> List[Optional[float]]:
        return [row.value for row in self.rows]

    def write(self, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / self.filename
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(self.export())
        tmp.replace(path)
        return path

    @classmethod
    def read(cls, path: Path) -> "MetricTable":
        lines = path.read_text(encoding="utf-8").splitlines()
        if len(lines) < 2 or not lines[0].startswith("# metric="):
            raise ValueError(f"{path} is not a metric table export")
        fields = dict(part.split("=", 1) for part in lines[0][2:].split())
        rows = []
        for line in lines[2:]:
            run_id, iteration, population, component, value, provenance = line.split("\t")
            rows.append(
                MetricRow(
                    run_id=run_id,
                    iteration=_parse_index(iteration),
                    population=_parse_index(population),
                    component=None if component == NULL else component,
                    value=None if value == NULL else float(value),
                    provenance=() if provenance == NULL else tuple(provenance.split(",")),
                )
            )
        return cls(name=fields["metric"], version=int(fields["version"]), rows=rows)


def table_path(root: Path, run_id: str, key: str) -> Path:
    return root / run_id / f"{key}.tsv"


def rows_for(tables: Iterable[MetricTable], name: str) -> Sequence[MetricRow]:
    for table in tables:
        if table.name == name:
            return table.rows
    return ()
