"""Distributions and knobs of the simulated QPU and HPC schedulers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Mapping, Tuple

import numpy as np

DEFAULT_EPOCH = datetime(2025, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class DelayModel:
    """Lognormal delay given by its median, or a constant.

    ``DelayModel.constant(0.0)`` is the deterministic mode used by tests.
    """

    kind: str = "lognormal"
    median: float = 1.0
    sigma: float = 0.5
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in {"lognormal", "constant"}:
            raise ValueError(f"unsupported delay model '{self.kind}'")
        if self.kind == "lognormal":
            if not self.median > 0:
                raise ValueError("lognormal median must be positive")
            if self.sigma < 0:
                raise ValueError("lognormal sigma must be non-negative")
        elif self.value < 0 or not math.isfinite(self.value):
            raise ValueError("constant delay must be a finite non-negative number")

    @classmethod
    def constant(cls, value: float = 0.0) -> "DelayModel":
        return cls(kind="constant", value=float(value))

    @classmethod
    def lognormal(cls, median: float, sigma: float) -> "DelayModel":
        return cls(kind="lognormal", median=float(median), sigma=float(sigma))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DelayModel":
        kind = str(data.get("kind", "lognormal"))
        if kind == "constant":
            return cls.constant(float(data.get("value", 0.0)))
        return cls.lognormal(float(data.get("median", 1.0)), float(data.get("sigma", 0.5)))

    def as_dict(self) -> Dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": "lognormal", "median": self.median, "sigma": self.sigma}

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.value
        return float(rng.lognormal(mean=math.log(self.median), sigma=self.sigma))


@dataclass(frozen=True)
class SchedulerModel:
    """Everything the simulated schedulers draw from.

    Defaults put the QPU wall clock around five minutes and the HPC walltime
    around ten, with a 60,000 s QPU allocation and 8,640 HPC tokens over a
    64-node partition of 112-core nodes.
    """

    qpu_queue: DelayModel = field(default_factory=lambda: DelayModel.lognormal(60.0, 1.0))
    qpu_service: DelayModel = field(default_factory=lambda: DelayModel.lognormal(300.0, 0.25))
    qpu_usage_fraction: Tuple[float, float] = (0.55, 0.8)
    hpc_queue: DelayModel = field(default_factory=lambda: DelayModel.lognormal(120.0, 1.0))
    hpc_service: DelayModel = field(default_factory=lambda: DelayModel.lognormal(600.0, 0.25))
    qpu_seconds: float = 60000.0
    hpc_tokens: float = 8640.0
    hpc_nodes: int = 64
    cores_per_node: int = 112
    token_rate: float = 1.0
    vmem_base_bytes: int = 4 * 2**30
    vmem_bytes_per_dim: int = 256 * 2**10
    vmem_sigma: float = 0.1
    cpu_utilisation: Tuple[float, float] = (0.28, 0.35)
    # utilisation added per decade of subspace dimension
    cpu_gain_per_decade: float = 0.02
    epoch: datetime = DEFAULT_EPOCH

    def __post_init__(self) -> None:
        for name in ("qpu_seconds", "hpc_tokens", "token_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"scheduler '{name}' must be positive")
        for name in ("hpc_nodes", "cores_per_node"):
            if getattr(self, name) < 1:
                raise ValueError(f"scheduler '{name}' must be at least 1")
        if self.cpu_gain_per_decade < 0:
            raise ValueError("scheduler 'cpu_gain_per_decade' must be non-negative")
        if self.vmem_base_bytes < 0 or self.vmem_bytes_per_dim < 0 or self.vmem_sigma < 0:
            raise ValueError("vmem model parameters must be non-negative")
        for name in ("qpu_usage_fraction", "cpu_utilisation"):
            low, high = getattr(self, name)
            if not 0 <= low <= high <= 1:
                raise ValueError(f"scheduler '{name}' must be a range within [0, 1]")
        if self.epoch.tzinfo is None:
            raise ValueError("scheduler epoch must be timezone-aware")

    @property
    def total_cores(self) -> int:
        return self.hpc_nodes * self.cores_per_node

    @property
    def max_cpupercent(self) -> int:
        return self.total_cores * 100

    def tokens_for(self, walltime_s: float, nodes: int | None = None) -> float:
        return (nodes or self.hpc_nodes) * (walltime_s / 3600.0) * self.token_rate

    def as_dict(self) -> Dict[str, Any]:
        return {
            "qpu_queue": self.qpu_queue.as_dict(),
            "qpu_service": self.qpu_service.as_dict(),
            "qpu_usage_fraction": list(self.qpu_usage_fraction),
            "hpc_queue": self.hpc_queue.as_dict(),
            "hpc_service": self.hpc_service.as_dict(),
            "quota": {"qpu_seconds": self.qpu_seconds, "hpc_tokens": self.hpc_tokens},
            "hpc_nodes": self.hpc_nodes,
            "cores_per_node": self.cores_per_node,
            "token_rate": self.token_rate,
            "vmem": {
                "base_bytes": self.vmem_base_bytes,
                "bytes_per_dim": self.vmem_bytes_per_dim,
                "sigma": self.vmem_sigma,
            },
            "cpu_utilisation": list(self.cpu_utilisation),
            "cpu_gain_per_decade": self.cpu_gain_per_decade,
            "epoch": self.epoch.strftime("%Y-%m-%dT%H:%M:%SZ"),
        }

    @classmethod
    def deterministic(cls, **overrides: Any) -> "SchedulerModel":
        """Constant zero queueing with fixed service times."""

        values: Dict[str, Any] = {
            "qpu_queue": DelayModel.constant(0.0),
            "qpu_service": DelayModel.constant(300.0),
            "hpc_queue": DelayModel.constant(0.0),
            "hpc_service": DelayModel.constant(600.0),
        }
        values.update(overrides)
        return cls(**values)
