"""Command-line entry points binding the QCSC observability stack together."""

from .config import ConfigError, RunConfig, load_config, parse_config  # noqa: F401

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
]
