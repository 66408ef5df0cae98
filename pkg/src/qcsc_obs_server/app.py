"""HTTP/1.1 JSON API over :class:`ObservabilityService`."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from qcsc_telemetry import RecordValidationError, TelemetryLevel
from qcsc_telemetry.canonical import encode_lines, iter_lines, parse_timestamp

from .errors import (
    BlobCorruptionError,
    BlobNotFoundError,
    DigestMismatchError,
    RunStateError,
    UnknownRunError,
)
from .service import ObservabilityService
from .store import RecordFilter

LOG = logging.getLogger(__name__)

NDJSON = "application/x-ndjson"


class CreateRunRequest(BaseModel):
    name: str
    config_digest: str
    run_id: Optional[str] = None
    idempotency_key: Optional[str] = None


class StatusRequest(BaseModel):
    status: str


class EtlRequest(BaseModel):
    run_id: str
    metrics: Optional[List[str]] = None


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(
    service: ObservabilityService,
    token: Optional[str] = None,
    etl_dir: Optional[Path] = None,
) -> FastAPI:
    """Build the API. ``token`` enables single shared bearer-token auth."""

    app = FastAPI(title="qcsc-observability", version="0.1.0")
    app.state.service = service
    etl_root = Path(etl_dir) if etl_dir is not None else service.data_dir / "etl"

    def require_token(authorization: Optional[str] = Header(default=None)) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    auth = [Depends(require_token)]

    @app.exception_handler(UnknownRunError)
    async def _unknown_run(request: Request, exc: UnknownRunError) -> JSONResponse:
        return _error(404, str(exc))

    @app.exception_handler(BlobNotFoundError)
    async def _unknown_blob(request: Request, exc: BlobNotFoundError) -> JSONResponse:
        return _error(404, str(exc))

    @app.exception_handler(RunStateError)
    async def _run_state(request: Request, exc: RunStateError) -> JSONResponse:
        return _error(409, str(exc))

    @app.exception_handler(DigestMismatchError)
    async def _digest_mismatch(request: Request, exc: DigestMismatchError) -> JSONResponse:
        return _error(400, str(exc))

    @app.exception_handler(BlobCorruptionError)
    async def _corrupt(request: Request, exc: BlobCorruptionError) -> JSONResponse:
        return _error(500, str(exc))

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------
    @app.post("/api/v1/runs", status_code=201, dependencies=auth)
    def create_run(body: CreateRunRequest) -> dict:
        try:
            manifest = service.register_run(
                body.name,
                body.config_digest,
                run_id=body.run_id,
                idempotency_key=body.idempotency_key,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return manifest.as_dict()

    @app.get("/api/v1/runs", dependencies=auth)
    def list_runs() -> list:
        return [manifest.as_dict() for manifest in service.list_runs()]

    @app.get("/api/v1/runs/{run_id}", dependencies=auth)
    def get_run(run_id: str) -> dict:
        return service.get_run(run_id).as_dict()

    @app.post("/api/v1/runs/{run_id}/status", dependencies=auth)
    def set_status(run_id: str, body: StatusRequest) -> dict:
        try:
            return service.finish_run(run_id, body.status).as_dict()
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    # ------------------------------------------------------------------
    # Records
    # ------------------------------------------------------------------
    @app.post("/api/v1/runs/{run_id}/records", dependencies=auth)
    async def ingest(run_id: str, request: Request) -> dict:
        body = await request.body()
        result = await run_in_threadpool(service.ingest, run_id, list(iter_lines(body)))
        return result.as_dict()

    @app.get("/api/v1/runs/{run_id}/records", dependencies=auth)
    def query_records(
        run_id: str,
        level: Optional[str] = None,
        kind: Optional[str] = None,
        iteration: Optional[int] = None,
        population: Optional[int] = None,
        since: Optional[str] = None,
        until: Optional[str] = None,
    ) -> Response:
        try:
            record_filter = RecordFilter(
                level=TelemetryLevel.parse(level) if level else None,
                kind=kind,
                iteration=iteration,
                population=population,
                since=parse_timestamp(since) if since else None,
                until=parse_timestamp(until) if until else None,
            )
        except (ValueError, RecordValidationError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        records = service.query_records(run_id, record_filter)
        return Response(content=encode_lines(records), media_type=NDJSON)

    @app.get("/api/v1/runs/{run_id}/export", dependencies=auth)
    def export_records(run_id: str) -> Response:
        return Response(content=encode_lines(service.records.export(run_id)), media_type=NDJSON)

    # ------------------------------------------------------------------
    # Blobs
    # ------------------------------------------------------------------
    @app.put("/api/v1/blobs/{blob_digest}", dependencies=auth)
    async def put_blob(blob_digest: str, request: Request) -> JSONResponse:
        body = await request.body()
        media_type = request.headers.get("content-type", "application/octet-stream")
        try:
            ref, created = await run_in_threadpool(
                service.blobs.put_expected, blob_digest, body, media_type
            )
        except DigestMismatchError:
            raise
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return JSONResponse(status_code=201 if created else 200, content=ref.as_dict())

    @app.get("/api/v1/blobs/{blob_digest}", dependencies=auth)
    def get_blob(blob_digest: str) -> Response:
        try:
            data = service.get_blob(blob_digest)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return Response(content=data, media_type="application/octet-stream")

    # ------------------------------------------------------------------
    # ETL
    # ------------------------------------------------------------------
    @app.post("/api/v1/etl/run", dependencies=auth)
    def run_etl(body: EtlRequest) -> dict:
        from qcsc_etl.errors import PipelineLockedError
        from qcsc_etl.pipeline import EtlPipeline
        from qcsc_etl.registry import default_registry

        registry = default_registry()
        try:
            definitions = registry.select(body.metrics)
        except KeyError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            tables = EtlPipeline(service, etl_root).run_pipeline(body.run_id, definitions)
        except PipelineLockedError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {
            "run_id": body.run_id,
            "tables": {table.key: table.export_digest() for table in tables},
        }

    return app
