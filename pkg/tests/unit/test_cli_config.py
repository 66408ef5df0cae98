import json
from pathlib import Path

import pytest

from qcsc_cli.config import ConfigError, load_config, parse_config
from qcsc_sched import DelayModel

WORKFLOWS = Path(__file__).resolve().parents[2] / "deploy" / "workflow"


def test_load_config(tmp_path: Path):
    config_path = tmp_path / "run.yaml"
    config_path.write_text(
        """
name: sqd-small
server:
  endpoint: http://obs.example:8700
  token: s3cret
  spool_dir: spool
  flush_interval: 0.5
de:
  F: 0.5
  Cr: 0.8
  n_pop: 6
  generations: 3
  master_seed: 11
sampler:
  bitflip: 0.02
  shots: 500
scheduler:
  qpu_queue: 0
  qpu_service: {kind: lognormal, median: 200.0, sigma: 0.1}
  quota:
    qpu_seconds: 1000
  hpc_nodes: 2
  cpu_gain_per_decade: 0.1
  epoch: "2025-06-01T00:00:00"
hamiltonian:
  toy:
    kind: hubbard
    n_sites: 4
subspace:
  d_max: 36
  k_max: 6
max_workers: 2
"""
    )

    cfg = load_config(config_path)

    assert cfg.name == "sqd-small"
    assert cfg.server.endpoint == "http://obs.example:8700"
    assert cfg.server.token == "s3cret"
    assert cfg.server.spool_dir == tmp_path / "spool"
    assert cfg.server.flush_interval == pytest.approx(0.5)
    assert (cfg.de.F, cfg.de.Cr, cfg.de.n_pop, cfg.de.generations, cfg.de.master_seed) == (0.5, 0.8, 6, 3, 11)
    assert cfg.sampler.shots == 500
    assert cfg.scheduler.qpu_queue == DelayModel.constant(0.0)
    assert cfg.scheduler.qpu_service == DelayModel.lognormal(200.0, 0.1)
    assert cfg.scheduler.qpu_seconds == 1000.0
    assert cfg.scheduler.hpc_nodes == 2
    assert cfg.scheduler.cpu_gain_per_decade == pytest.approx(0.1)
    assert cfg.scheduler.epoch.tzinfo is not None
    assert cfg.subspace.d_max == 36
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.max_workers == 2
    spec = cfg.hamiltonian.load()
    assert (spec.n_orb, spec.n_alpha, spec.n_beta) == (4, 2, 2)


def test_defaults():
    cfg = parse_config({})

    assert cfg.name == "sqd-toy"
    assert cfg.server.endpoint == "http://127.0.0.1:8700"
    assert cfg.server.token is None
    assert cfg.server.enabled is True
    assert (cfg.de.F, cfg.de.Cr, cfg.de.n_pop) == (0.6, 0.9, 4)
    assert cfg.sampler.retention == pytest.approx(0.469)
    assert cfg.scheduler.qpu_seconds == 60000.0
    assert cfg.scheduler.hpc_tokens == 8640.0
    assert cfg.hamiltonian.toy == {"kind": "hubbard6"}
    assert cfg.max_workers is None


def test_shipped_workflows_load():
    toy = load_config(WORKFLOWS / "toy.yaml")
    h2 = load_config(WORKFLOWS / "h2.yaml")

    assert toy.de.generations == 10
    assert toy.de.master_seed == 42
    assert toy.hamiltonian.load().n_orb == 6
    assert h2.hamiltonian.fcidump == WORKFLOWS / "h2.fcidump"
    spec = h2.hamiltonian.load()
    assert (spec.n_orb, spec.n_alpha, spec.n_beta) == (2, 1, 1)
    assert len(h2.hamiltonian.as_dict()["fcidump_sha256"]) == 64


def test_to_dict_leaves_out_the_token():
    cfg = parse_config({"server": {"token": "s3cret"}})

    data = cfg.to_dict()

    assert "token" not in data["server"]
    assert "s3cret" not in json.dumps(data)
    assert data["scheduler"]["quota"] == {"qpu_seconds": 60000.0, "hpc_tokens": 8640.0}


def test_with_seed_returns_a_new_config():
    cfg = parse_config({"de": {"master_seed": 1}})

    reseeded = cfg.with_seed(99)

    assert reseeded.de.master_seed == 99
    assert cfg.de.master_seed == 1
    with pytest.raises(ConfigError):
        cfg.with_seed(-1)


@pytest.mark.parametrize(
    "data",
    [
        ["not", "a", "mapping"],
        {"de": ["F", 0.6]},
        {"de": {"F": -1.0}},
        {"de": {"generations": "many"}},
        {"scheduler": {"qpu_usage_fraction": [0.5]}},
        {"scheduler": {"qpu_queue": "slow"}},
        {"scheduler": {"quota": {"qpu_seconds": 0}}},
        {"hamiltonian": {"fcidump": "h2.fcidump", "toy": {"kind": "hubbard2"}}},
        {"hamiltonian": {"toy": "hubbard2"}},
        {"max_workers": "four"},
    ],
)
def test_invalid_configs_are_rejected(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_unreadable_files_are_config_errors(tmp_path: Path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("de: [unclosed\n")

    with pytest.raises(ConfigError):
        load_config(broken)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
