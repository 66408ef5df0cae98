"""Exceptions raised by the telemetry vocabulary."""

from __future__ import annotations


class TelemetryError(Exception):
    """Base class for telemetry format errors."""


class RecordValidationError(TelemetryError, ValueError):
    """A record violates the schema or cannot be decoded."""


class ContainerFormatError(TelemetryError, ValueError):
    """A packed bitset or vector container is malformed."""
