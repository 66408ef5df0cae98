"""Server settings: command-line values, then environment, then defaults."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Tuple

DEFAULT_BIND = "127.0.0.1:8700"


def parse_bind(value: str) -> Tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise ValueError(f"bind address must look like host:port, got '{value}'")
    try:
        return host, int(port)
    except ValueError:
        raise ValueError(f"invalid port in bind address '{value}'") from None


@dataclass(frozen=True)
class ServerSettings:
    data_dir: Path
    host: str
    port: int
    token: Optional[str] = None

    @classmethod
    def resolve(
        cls,
        data_dir: Optional[Path] = None,
        bind: Optional[str] = None,
        token: Optional[str] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> "ServerSettings":
        env = os.environ if environ is None else environ
        host, port = parse_bind(bind or env.get("QCSC_BIND") or DEFAULT_BIND)
        return cls(
            data_dir=Path(data_dir or env.get("QCSC_DATA_DIR") or "data"),
            host=host,
            port=port,
            token=token or env.get("QCSC_TOKEN") or None,
        )
