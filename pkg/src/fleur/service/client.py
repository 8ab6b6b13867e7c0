"""HTTP client for the scoring service, plus an ephemeral in-process server.

The CLI is a thin client: every command goes through the service's HTTP API.
When no remote service URL is given, ``local_service`` boots a uvicorn server
on an ephemeral localhost port for the duration of the command, so local and
remote use exercise the same wire surface.
"""

from __future__ import annotations

import contextlib
import threading
import time
from typing import Any

import httpx
import uvicorn

from ..errors import FleurError, TransportError
from .app import ServiceSettings, create_app
from . import schemas


class ServiceError(FleurError):
    """The service answered with an error body."""

    def __init__(self, status_code: int, error: str, detail: str):
        super().__init__(f"{error}: {detail}")
        self.status_code = status_code
        self.error = error
        self.detail = detail


class ServiceClient:
    """Typed wrapper over the service's JSON API."""

    def __init__(self, base_url: str, timeout: float = 600.0):
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        try:
            response = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise TransportError(f"service unreachable at {self.base_url}: {exc}") from exc
        if response.status_code >= 400:
            try:
                body = response.json()
                raise ServiceError(response.status_code, body["error"], body["detail"])
            except (ValueError, KeyError):
                raise ServiceError(response.status_code, "HTTPError", response.text[:500]) from None
        return response.json()

    def health(self) -> schemas.HealthResponse:
        response = self._client.get("/healthz")
        response.raise_for_status()
        return schemas.HealthResponse.model_validate(response.json())

    def score(self, payload: schemas.ScoreRequest) -> schemas.ScoreResponse:
        return schemas.ScoreResponse.model_validate(self._post("/v1/score", payload.model_dump()))

    def explain(self, payload: schemas.ScoreRequest) -> schemas.ExplainResponse:
        return schemas.ExplainResponse.model_validate(self._post("/v1/explain", payload.model_dump()))

    def benchmark(self, payload: schemas.BenchmarkRequest) -> schemas.BenchmarkResponse:
        return schemas.BenchmarkResponse.model_validate(
            self._post("/v1/benchmark", payload.model_dump())
        )

    def ablate(self, payload: schemas.AblateRequest) -> schemas.AblateResponse:
        return schemas.AblateResponse.model_validate(self._post("/v1/ablate", payload.model_dump()))


@contextlib.contextmanager
def local_service(settings: ServiceSettings, startup_timeout: float = 15.0):
    """Run the service on an ephemeral localhost port; yields a ServiceClient."""
    app = create_app(settings)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, name="fleur-local-service", daemon=True)
    thread.start()
    deadline = time.monotonic() + startup_timeout
    while not server.started:
        if not thread.is_alive() or time.monotonic() > deadline:
            raise TransportError("local service failed to start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    client = ServiceClient(f"http://127.0.0.1:{port}")
    try:
        yield client
    finally:
        client.close()
        server.should_exit = True
        thread.join(timeout=10.0)
