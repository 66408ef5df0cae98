"""Registry of metric definitions available to the ETL pipeline."""

from __future__ import annotations

from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from .definitions import MetricDefinition, default_definitions


class MetricRegistry:
    """Metric definitions keyed by ``(name, version)``.

    Definitions can be registered at any time, including after a workflow has
    finished: the pipeline computes them from the stored raw data.
    """

    def __init__(self, definitions: Iterable[MetricDefinition] = ()) -> None:
        self._definitions: Dict[Tuple[str, int], MetricDefinition] = {}
        for definition in definitions:
            self.register(definition)

    def register(self, definition: MetricDefinition) -> None:
        key = (definition.name, definition.version)
        if key in self._definitions:
            raise ValueError(f"metric '{definition.key}' already registered")
        if definition.version < 1:
            raise ValueError(f"metric '{definition.name}' needs a positive version")
        self._definitions[key] = definition

    def unregister(self, name: str, version: Optional[int] = None) -> None:
        for key in [key for key in self._definitions if key[0] == name]:
            if version is None or key[1] == version:
                del self._definitions[key]

    def get(self, name: str, version: Optional[int] = None) -> MetricDefinition:
        """Look up a definition; without a version the highest one wins."""

        if version is not None:
            try:
                return self._definitions[(name, version)]
            except KeyError:
                raise KeyError(f"unknown metric '{name}.v{version}'") from None
        versions = [key[1] for key in self._definitions if key[0] == name]
        if not versions:
            raise KeyError(f"unknown metric '{name}'")
        return self._definitions[(name, max(versions))]

    def select(self, names: Optional[Iterable[str]] = None) -> List[MetricDefinition]:
        """Resolve ``name`` or ``name.vN`` selectors; None selects the latest of each."""

        if names is None:
            return [self.get(name) for name in self.names()]
        selected = []
        for selector in names:
            name, _, suffix = selector.partition(".v")
            version = int(suffix) if suffix.isdigit() else None
            if suffix and version is None:
                name = selector
            definition = self.get(name, version)
            if definition not in selected:
                selected.append(definition)
        return selected

    def names(self) -> List[str]:
        return sorted({name for name, _ in self._definitions})

    def __iter__(self) -> Iterator[MetricDefinition]:
        return iter(self._definitions[key] for key in sorted(self._definitions))

    def __len__(self) -> int:
        return len(self._definitions)

    def __contains__(self, name: str) -> bool:
        return any(key[0] == name for key in self._definitions)


def default_registry() -> MetricRegistry:
    return MetricRegistry(default_definitions())
