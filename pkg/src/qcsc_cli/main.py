"""Entry point for the ``qcsc`` command."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from qcsc_etl import EtlPipeline, PipelineLockedError, build_report, default_registry
from qcsc_obs_client import ObsTransport, replay_spool, start_run
from qcsc_obs_server import ObservabilityService, RunStateError, ServerSettings, UnknownRunError
from qcsc_sched import JobScheduler, QuotaExceededError
from qcsc_sqd import (
    DavidsonConvergenceError,
    FcidumpFormatError,
    HamiltonianError,
    NonFiniteEnergyError,
    SubspaceError,
    run_closed_loop,
    toy_spec,
    write_fcidump,
)

from .config import ConfigError, load_config
from .verify import SUITES, VerifyContext, run_suites

LOG = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_WORKLOAD = 1
EXIT_CONFIG = 2

WORKLOAD_ERRORS = (
    DavidsonConvergenceError,
    FcidumpFormatError,
    HamiltonianError,
    NonFiniteEnergyError,
    QuotaExceededError,
    SubspaceError,
)


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
    )


# ----------------------------------------------------------------------
# serve
# ----------------------------------------------------------------------
def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from qcsc_obs_server.app import create_app

    try:
        settings = ServerSettings.resolve(data_dir=args.data_dir, bind=args.bind, token=args.token)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    service = ObservabilityService(settings.data_dir)
    app = create_app(service, token=settings.token)
    LOG.info(
        "serving %s on %s:%d (auth %s)",
        settings.data_dir,
        settings.host,
        settings.port,
        "on" if settings.token else "off",
    )
    uvicorn.run(app, host=settings.host, port=settings.port, log_level="info")
    return EXIT_OK


# ----------------------------------------------------------------------
# run-workflow
# ----------------------------------------------------------------------
def _cmd_run_workflow(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    try:
        spec = config.hamiltonian.load()
    except (OSError, FcidumpFormatError, HamiltonianError) as exc:
        raise ConfigError(f"cannot load hamiltonian: {exc}") from exc

    handle = start_run(config.server.endpoint, config.name, config, settings=config.server)
    status = "failed"
    try:
        result = run_closed_loop(
            spec,
            config.de,
            config.sampler,
            handle,
            scheduler=JobScheduler(config.scheduler),
            subspace=config.subspace,
            max_workers=config.max_workers,
        )
        status = "completed"
    finally:
        report = handle.finish(status)

    out_dir = config.output_dir / handle.run_id
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "run_id": handle.run_id,
        "name": config.name,
        "best_energy": result.best_energy,
        "best_population": result.best_population,
        "energies": result.energies,
        "accepted_history": result.accepted_history,
        "qpu_jobs": result.qpu_jobs,
        "hpc_jobs": result.hpc_jobs,
        "telemetry": {
            "enabled": handle.enabled,
            "emitted": handle.emitted,
            "backlog": report.backlog,
        },
    }
    (out_dir / "result.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if report.backlog:
        LOG.warning(
            "%d telemetry record(s) still spooled; deliver them with "
            "'qcsc replay --spool %s'",
            report.backlog,
            Path(config.server.spool_dir) / handle.run_id,
        )
    print(f"{handle.run_id}\t{result.best_energy:.12f}")
    return EXIT_OK


# ----------------------------------------------------------------------
# etl / report
# ----------------------------------------------------------------------
def _cmd_etl(args: argparse.Namespace) -> int:
    service = ObservabilityService(args.data_dir)
    registry = default_registry()
    try:
        definitions = registry.select(args.metrics)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = args.out or args.data_dir / "etl"
    pipeline = EtlPipeline(service, out_dir)
    tables = pipeline.run_pipeline(args.run_id, definitions)
    for table in tables:
        print(f"{table.key}\t{len(table.rows)}\t{table.export_digest()}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    service = ObservabilityService(args.data_dir)
    etl_dir = args.etl_dir or args.data_dir / "etl"
    result = build_report(service, args.run_id, etl_dir=etl_dir, out_dir=args.out, plots=args.plots)
    if result.absent:
        LOG.warning("panels without data: %s", ", ".join(result.absent))
    print(result.out_dir / "manifest.json")
    return EXIT_OK


# ----------------------------------------------------------------------
# verify / replay / toy
# ----------------------------------------------------------------------
def _cmd_verify(args: argparse.Namespace) -> int:
    if args.list:
        for suite in SUITES.values():
            print(f"{suite.name}\t{suite.description}")
        return EXIT_OK
    try:
        reports = run_suites(args.suite, VerifyContext(seed=args.seed))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    failed = False
    for report in reports:
        print(f"{'PASS' if report.passed else 'FAIL'}\t{report.name}\t{len(report.results)} check(s)")
        if report.error:
            print(f"\terror: {report.error}")
        for failure in report.failures:
            print(f"\t{failure.name}: {failure.detail}")
        failed = failed or not report.passed
    return EXIT_WORKLOAD if failed else EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    if not args.spool.is_dir():
        raise ConfigError(f"spool directory {args.spool} does not exist")
    transport = ObsTransport(args.endpoint, args.token)
    try:
        report = replay_spool(args.spool, transport)
    finally:
        transport.close()
    print(
        f"delivered={report.delivered} duplicates={report.duplicates} "
        f"rejected={report.rejected} backlog={report.backlog}"
    )
    if not report.complete:
        LOG.error("replay incomplete: %s", report.error or f"{report.backlog} left")
        return EXIT_WORKLOAD
    return EXIT_OK


def _cmd_toy(args: argparse.Namespace) -> int:
    options: Dict[str, object] = {}
    if args.n_orb is not None:
        options["n_sites" if args.kind == "hubbard" else "n_orb"] = args.n_orb
    if args.seed is not None:
        options["seed"] = args.seed
    try:
        spec = toy_spec(args.kind, **options)
    except (HamiltonianError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    print(write_fcidump(spec, args.out))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcsc", description="QCSC observability stack")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    serve = commands.add_parser("serve", help="Run the observability server")
    serve.add_argument("--data-dir", type=Path, help="Storage directory (env QCSC_DATA_DIR)")
    serve.add_argument("--bind", help="host:port to listen on (env QCSC_BIND)")
    serve.add_argument("--token", help="Shared bearer token (env QCSC_TOKEN)")
    serve.set_defaults(handler=_cmd_serve)

    run = commands.add_parser("run-workflow", help="Run the closed-loop SQD workload")
    run.add_argument("--config", type=Path, required=True, help="Workflow configuration file")
    run.add_argument("--seed", type=int, help="Override de.master_seed")
    run.set_defaults(handler=_cmd_run_workflow)

    etl = commands.add_parser("etl", help="Compute metric tables for a completed run")
    etl.add_argument("--run-id", required=True)
    etl.add_argument("--metrics", nargs="+", help="Metric names, optionally name.vN")
    etl.add_argument("--data-dir", type=Path, default=Path("data"))
    etl.add_argument("--out", type=Path, help="Metric table directory (default <data-dir>/etl)")
    etl.set_defaults(handler=_cmd_etl)

    report = commands.add_parser("report", help="Render a report bundle over one or more runs")
    report.add_argument("--run-id", nargs="+", required=True)
    report.add_argument("--out", type=Path, required=True)
    report.add_argument("--data-dir", type=Path, default=Path("data"))
    report.add_argument("--etl-dir", type=Path, help="Metric table directory (default <data-dir>/etl)")
    report.add_argument("--plots", action="store_true", help="Also render SVG plots (needs matplotlib)")
    report.set_defaults(handler=_cmd_report)

    verify = commands.add_parser("verify", help="Run oracle suites")
    verify.add_argument("--suite", nargs="+", help="Suites to run (default all)")
    verify.add_argument("--list", action="store_true", help="List suites and exit")
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(handler=_cmd_verify)

    replay = commands.add_parser("replay", help="Deliver a spool left by an earlier run")
    replay.add_argument("--spool", type=Path, required=True, help="Spool directory of one run")
    replay.add_argument("--endpoint", default="http://127.0.0.1:8700")
    replay.add_argument("--token")
    replay.set_defaults(handler=_cmd_replay)

    toy = commands.add_parser("toy", help="Write a toy system as an FCIDUMP file")
    toy.add_argument("--kind", default="hubbard6", choices=("hubbard2", "hubbard6", "hubbard", "random"))
    toy.add_argument("--n-orb", type=int, help="Sites (hubbard) or orbitals (random)")
    toy.add_argument("--seed", type=int, help="Integral seed (random)")
    toy.add_argument("--out", type=Path, required=True)
    toy.set_defaults(handler=_cmd_toy)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ConfigError as exc:
        LOG.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (UnknownRunError, RunStateError, PipelineLockedError) as exc:
        LOG.error("%s", exc)
        return EXIT_WORKLOAD
    except WORKLOAD_ERRORS as exc:
        LOG.error("workload failed: %s", exc)
        return EXIT_WORKLOAD


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
