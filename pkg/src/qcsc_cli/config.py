"""YAML configuration loader for workflow runs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from qcsc_obs_client import ClientSettings
from qcsc_sched import DelayModel, SchedulerModel
from qcsc_sqd import DEConfig, HamiltonianSpec, SamplerModel, SubspaceSettings, read_fcidump
from qcsc_sqd.toy import toy_from_mapping


class ConfigError(ValueError):
    """The run configuration is malformed; the CLI exits with status 2."""


@dataclass
class HamiltonianSource:
    """Where the Hamiltonian comes from: an FCIDUMP file or a named toy system."""

    fcidump: Optional[Path] = None
    toy: Dict[str, Any] = field(default_factory=dict)

    def load(self) -> HamiltonianSpec:
        if self.fcidump is not None:
            return read_fcidump(self.fcidump)
        return toy_from_mapping(self.toy)

    def as_dict(self) -> Dict[str, Any]:
        if self.fcidump is None:
            return {"toy": dict(self.toy)}
        # the file content, not its location, identifies the problem
        return {
            "fcidump": str(self.fcidump),
            "fcidump_sha256": hashlib.sha256(self.fcidump.read_bytes()).hexdigest(),
        }


@dataclass
class RunConfig:
    name: str
    server: ClientSettings
    de: DEConfig
    sampler: SamplerModel
    scheduler: SchedulerModel
    hamiltonian: HamiltonianSource
    subspace: SubspaceSettings
    output_dir: Path = Path("out")
    max_workers: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        """Canonical serializable form; the bearer token is left out."""

        return {
            "name": self.name,
            "server": {
                "endpoint": self.server.endpoint,
                "enabled": self.server.enabled,
                "queue_bound": self.server.queue_bound,
                "flush_interval": self.server.flush_interval,
                "batch_size": self.server.batch_size,
            },
            "de": {
                "F": self.de.F,
                "Cr": self.de.Cr,
                "n_pop": self.de.n_pop,
                "generations": self.de.generations,
                "master_seed": self.de.master_seed,
            },
            "sampler": {
                "beta": self.sampler.beta,
                "bitflip": self.sampler.bitflip,
                "retention": self.sampler.retention,
                "shots": self.sampler.shots,
                "n_params": self.sampler.n_params,
            },
            "scheduler": self.scheduler.as_dict(),
            "hamiltonian": self.hamiltonian.as_dict(),
            "subspace": {
                "d_max": self.subspace.d_max,
                "k_max": self.subspace.k_max,
                "amp_floor": self.subspace.amp_floor,
                "tol": self.subspace.tol,
                "max_iter": self.subspace.max_iter,
            },
            "output_dir": str(self.output_dir),
            "max_workers": self.max_workers,
        }

    def with_seed(self, seed: int) -> "RunConfig":
        try:
            de = replace(self.de, master_seed=int(seed))
        except ValueError as exc:
            raise ConfigError(f"invalid seed {seed}: {exc}") from exc
        return replace(self, de=de)


def _section(data: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    section = data.get(name) or {}
    if not isinstance(section, Mapping):
        raise ConfigError(f"'{name}' section must be a mapping")
    return section


def _pair(section: Mapping[str, Any], key: str, default: tuple) -> tuple:
    value = section.get(key, default)
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"scheduler '{key}' must be a [low, high] pair")
    return (float(value[0]), float(value[1]))


def _parse_server(section: Mapping[str, Any], base: Path) -> ClientSettings:
    spool_dir = Path(section.get("spool_dir", ".qcsc-spool"))
    return ClientSettings(
        endpoint=str(section.get("endpoint", "http://127.0.0.1:8700")),
        token=section.get("token"),
        spool_dir=spool_dir if spool_dir.is_absolute() else base / spool_dir,
        queue_bound=int(section.get("queue_bound", 1024)),
        flush_interval=float(section.get("flush_interval", 1.0)),
        batch_size=int(section.get("batch_size", 256)),
        enabled=bool(section.get("enabled", True)),
        timeout=float(section.get("timeout", 5.0)),
    )


def _parse_de(section: Mapping[str, Any]) -> DEConfig:
    return DEConfig(
        F=float(section.get("F", 0.6)),
        Cr=float(section.get("Cr", 0.9)),
        n_pop=int(section.get("n_pop", 4)),
        generations=int(section.get("generations", 20)),
        master_seed=int(section.get("master_seed", 0)),
    )


def _parse_sampler(section: Mapping[str, Any]) -> SamplerModel:
    n_params = section.get("n_params")
    return SamplerModel(
        beta=float(section.get("beta", 1.0)),
        bitflip=float(section.get("bitflip", 0.01)),
        retention=float(section.get("retention", 0.469)),
        shots=int(section.get("shots", 10_000)),
        n_params=None if n_params is None else int(n_params),
    )


def _parse_delay(section: Mapping[str, Any], key: str, default: DelayModel) -> DelayModel:
    value = section.get(key)
    if value is None:
        return default
    if isinstance(value, (int, float)):
        return DelayModel.constant(float(value))
    if not isinstance(value, Mapping):
        raise ConfigError(f"scheduler '{key}' must be a number or a mapping")
    return DelayModel.from_dict(value)


def _parse_scheduler(section: Mapping[str, Any]) -> SchedulerModel:
    defaults = SchedulerModel()
    quota = section.get("quota") or {}
    vmem = section.get("vmem") or {}
    epoch = section.get("epoch")
    if isinstance(epoch, str):
        epoch = datetime.fromisoformat(epoch.replace("Z", "+00:00"))
    if isinstance(epoch, datetime) and epoch.tzinfo is None:
        epoch = epoch.replace(tzinfo=timezone.utc)
    return SchedulerModel(
        qpu_queue=_parse_delay(section, "qpu_queue", defaults.qpu_queue),
        qpu_service=_parse_delay(section, "qpu_service", defaults.qpu_service),
        qpu_usage_fraction=_pair(section, "qpu_usage_fraction", defaults.qpu_usage_fraction),
        hpc_queue=_parse_delay(section, "hpc_queue", defaults.hpc_queue),
        hpc_service=_parse_delay(section, "hpc_service", defaults.hpc_service),
        qpu_seconds=float(quota.get("qpu_seconds", defaults.qpu_seconds)),
        hpc_tokens=float(quota.get("hpc_tokens", defaults.hpc_tokens)),
        hpc_nodes=int(section.get("hpc_nodes", defaults.hpc_nodes)),
        cores_per_node=int(section.get("cores_per_node", defaults.cores_per_node)),
        token_rate=float(section.get("token_rate", defaults.token_rate)),
        vmem_base_bytes=int(vmem.get("base_bytes", defaults.vmem_base_bytes)),
        vmem_bytes_per_dim=int(vmem.get("bytes_per_dim", defaults.vmem_bytes_per_dim)),
        vmem_sigma=float(vmem.get("sigma", defaults.vmem_sigma)),
        cpu_utilisation=_pair(section, "cpu_utilisation", defaults.cpu_utilisation),
        cpu_gain_per_decade=float(section.get("cpu_gain_per_decade", defaults.cpu_gain_per_decade)),
        epoch=epoch or defaults.epoch,
    )


def _parse_hamiltonian(section: Mapping[str, Any], base: Path) -> HamiltonianSource:
    if "fcidump" in section and "toy" in section:
        raise ConfigError("'hamiltonian' takes either 'fcidump' or 'toy', not both")
    if "fcidump" in section:
        path = Path(section["fcidump"])
        return HamiltonianSource(fcidump=path if path.is_absolute() else base / path)
    toy = section.get("toy", {"kind": "hubbard6"})
    if not isinstance(toy, Mapping):
        raise ConfigError("'hamiltonian.toy' must be a mapping")
    return HamiltonianSource(toy=dict(toy))


def _parse_subspace(section: Mapping[str, Any]) -> SubspaceSettings:
    return SubspaceSettings(
        d_max=int(section.get("d_max", 1000)),
        k_max=int(section.get("k_max", 256)),
        amp_floor=float(section.get("amp_floor", 1e-6)),
        tol=float(section.get("tol", 1e-8)),
        max_iter=int(section.get("max_iter", 200)),
    )


def parse_config(data: Any, base: Path = Path(".")) -> RunConfig:
    """Build a :class:`RunConfig` from an already-loaded mapping.

    Relative paths (spool directory, FCIDUMP file, output directory) resolve
    against ``base``, the directory of the configuration file.
    """

    if not isinstance(data, Mapping):
        raise ConfigError("run configuration must be a mapping")
    parsers = (
        ("server", lambda section: _parse_server(section, base)),
        ("de", _parse_de),
        ("sampler", _parse_sampler),
        ("scheduler", _parse_scheduler),
        ("hamiltonian", lambda section: _parse_hamiltonian(section, base)),
        ("subspace", _parse_subspace),
    )
    parsed: Dict[str, Any] = {}
    for name, parser in parsers:
        try:
            parsed[name] = parser(_section(data, name))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid '{name}' section: {exc}") from exc

    output_dir = Path(data.get("output_dir", "out"))
    max_workers = data.get("max_workers")
    try:
        max_workers = None if max_workers is None else int(max_workers)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'max_workers': {exc}") from exc
    return RunConfig(
        name=str(data.get("name", "sqd-toy")),
        output_dir=output_dir if output_dir.is_absolute() else base / output_dir,
        max_workers=max_workers,
        **parsed,
    )


def load_config(path: Path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration {path} is not valid YAML: {exc}") from exc
    return parse_config(data, Path(path).parent)
