"""Workflow metrics pyramid levels."""

from __future__ import annotations

from enum import IntEnum


class TelemetryLevel(IntEnum):
    """The five telemetry levels, hardware (L0) through domain (L4).

    Only L2 (job), L3 (task) and L4 (domain) have collectors in this project;
    L0/L1 exist so records from future collectors validate.
    """

    L0 = 0
    L1 = 1
    L2 = 2
    L3 = 3
    L4 = 4

    @classmethod
    def parse(cls, value: "str | int | TelemetryLevel") -> "TelemetryLevel":
        if isinstance(value, TelemetryLevel):
            return value
        if isinstance(value, str):
            name = value.strip().upper()
            if name in cls.__members__:
                return cls[name]
            raise ValueError(f"unknown telemetry level '{value}'")
        if isinstance(value, bool):
            raise ValueError(f"unknown telemetry level {value!r}")
        return cls(int(value))
