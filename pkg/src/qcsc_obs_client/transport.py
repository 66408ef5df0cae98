"""Thin httpx wrapper speaking the observability server API."""

from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional

import httpx

from qcsc_telemetry import BlobRef, TelemetryRecord
from qcsc_telemetry.canonical import decode_lines

from .errors import TransportError

LOG = logging.getLogger(__name__)


class ObsTransport:
    """Blocking API client.

    ``http`` may be any ``httpx.Client`` with a ``base_url``; tests pass
    FastAPI's ``TestClient`` so requests never leave the process.
    """

    def __init__(
        self,
        endpoint: str = "http://127.0.0.1:8700",
        token: Optional[str] = None,
        *,
        timeout: float = 5.0,
        http: Optional[httpx.Client] = None,
    ) -> None:
        self._http = http if http is not None else httpx.Client(base_url=endpoint, timeout=timeout)
        self._owns_http = http is None
        self._auth: Dict[str, str] = {"Authorization": f"Bearer {token}"} if token else {}

    def close(self) -> None:
        if self._owns_http:
            self._http.close()

    def _request(self, method: str, path: str, *, headers: Optional[Dict[str, str]] = None, **kwargs: Any) -> httpx.Response:
        merged = {**self._auth, **(headers or {})}
        try:
            response = self._http.request(method, path, headers=merged, **kwargs)
        except httpx.HTTPError as exc:
            raise TransportError(f"{method} {path} failed: {exc}") from exc
        if response.status_code >= 400:
            raise TransportError(
                f"{method} {path} returned {response.status_code}: {response.text[:200]}",
                status_code=response.status_code,
            )
        return response

    # ------------------------------------------------------------------
    # API calls
    # ------------------------------------------------------------------
    def healthy(self) -> bool:
        try:
            self._request("GET", "/healthz")
        except TransportError:
            return False
        return True

    def put_blob(self, ref: BlobRef, data: bytes) -> bool:
        """Upload a blob; returns True when the server stored a new object."""

        response = self._request(
            "PUT",
            f"/api/v1/blobs/{ref.digest}",
            content=data,
            headers={"Content-Type": ref.media_type},
        )
        return response.status_code == 201

    def get_blob(self, blob_digest: str) -> bytes:
        return self._request("GET", f"/api/v1/blobs/{blob_digest}").content

    def create_run(
        self, run_id: str, name: str, config_digest: str, idempotency_key: Optional[str] = None
    ) -> Dict[str, Any]:
        response = self._request(
            "POST",
            "/api/v1/runs",
            json={
                "name": name,
                "config_digest": config_digest,
                "run_id": run_id,
                "idempotency_key": idempotency_key or run_id,
            },
        )
        return response.json()

    def get_run(self, run_id: str) -> Dict[str, Any]:
        return self._request("GET", f"/api/v1/runs/{run_id}").json()

    def set_status(self, run_id: str, status: str) -> Dict[str, Any]:
        return self._request(
            "POST", f"/api/v1/runs/{run_id}/status", json={"status": status}
        ).json()

    def post_records(self, run_id: str, body: bytes) -> Dict[str, Any]:
        response = self._request(
            "POST",
            f"/api/v1/runs/{run_id}/records",
            content=body,
            headers={"Content-Type": "application/x-ndjson"},
        )
        return response.json()

    def query_records(self, run_id: str, **filters: Any) -> List[TelemetryRecord]:
        params = {key: value for key, value in filters.items() if value is not None}
        response = self._request("GET", f"/api/v1/runs/{run_id}/records", params=params)
        return decode_lines(response.content)
