"""FastAPI application wrapping the scoring engine.

The service owns the backend connection, the generation cache, and all
orchestration; clients (the bundled CLI included) only move bytes.  Backends
are addressed by endpoint URL; the special form ``mock:<script.json>`` loads
the scripted mock backend, which keeps hermetic runs and demos on the same
code path as production serving.
"""

from __future__ import annotations

import base64
import binascii
import logging
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..backends import Backend, HttpBackend, ImagePayload, MockBackend
from ..cache import CacheStore
from ..datasets import DatasetKind, JudgmentPolicy, parse_dataset_text
from ..errors import (
    BackendConfigError,
    DatasetError,
    FleurError,
    PromptError,
    ScriptExhaustedError,
    TransportError,
)
from ..evaluator import Evaluator, MetricConfig, MetricMode, ScoreOutcome
from ..harness import BenchmarkSettings, run_benchmark
from ..prompts import TEMPLATE_VERSION, PromptOrdering
from ..scoring import SamplingConfig
from . import schemas

logger = logging.getLogger(__name__)

_ORDERINGS = {
    "score-first": PromptOrdering.SCORE_THEN_EXPLANATION,
    "explanation-first": PromptOrdering.EXPLANATION_THEN_SCORE,
}

#: HTTP status per error family: bad client input vs upstream/backend trouble.
_CLIENT_ERRORS = (PromptError, DatasetError)
_UPSTREAM_ERRORS = (TransportError, BackendConfigError, ScriptExhaustedError)


@dataclass(frozen=True)
class ServiceSettings:
    """Service-level configuration resolved from flags/env/config file by the caller."""

    endpoint: str
    model_id: str
    cache_dir: Path | None = None
    seed: int | None = None
    timeout: float = 120.0
    max_retries: int = 3
    concurrency: int = 4


def build_backend(settings: ServiceSettings) -> Backend:
    """Resolve the backend address: ``mock:<script.json>`` or an HTTP endpoint URL."""
    if settings.endpoint.startswith("mock:"):
        script_path = settings.endpoint[len("mock:") :]
        return MockBackend.from_file(script_path, seed=settings.seed or 0)
    return HttpBackend(
        settings.endpoint,
        timeout=settings.timeout,
        max_retries=settings.max_retries,
        concurrency=settings.concurrency,
    )


def parse_criteria(raw: str) -> frozenset[str]:
    """Parse a criteria subset string; '', 'none' and the empty-set sign mean no criteria."""
    cleaned = raw.strip()
    if cleaned in ("", "none", "∅"):
        return frozenset()
    return frozenset(cleaned)


def metric_config(options: schemas.MetricOptions) -> MetricConfig:
    mode = MetricMode(options.mode)
    sampling = None
    if mode is MetricMode.SAMPLED:
        sampling = SamplingConfig(
            n_samples=options.n_samples,
            temperature=options.temperature,
            nucleus_mass=options.nucleus_mass,
        )
    return MetricConfig(
        mode=mode,
        criteria=parse_criteria(options.criteria),
        ordering=_ORDERINGS[options.ordering],
        sampling=sampling,
    )


def create_app(settings: ServiceSettings, backend: Backend | None = None) -> FastAPI:
    """Build the service; ``backend`` may be injected (tests) or resolved from settings."""
    backend = backend if backend is not None else build_backend(settings)
    cache = CacheStore(settings.cache_dir) if settings.cache_dir else None
    evaluator = Evaluator(backend, settings.model_id, cache=cache, seed=settings.seed)
    app = FastAPI(title="caption-score service", version="0.1.0")

    @app.exception_handler(FleurError)
    async def fleur_error_handler(request: Request, exc: FleurError):
        if isinstance(exc, _CLIENT_ERRORS):
            status = 400
        elif isinstance(exc, _UPSTREAM_ERRORS):
            status = 502
        else:
            status = 422
        body = schemas.ErrorBody(error=type(exc).__name__, detail=str(exc))
        return JSONResponse(status_code=status, content=body.model_dump())

    def decode_image(payload: schemas.ScoreRequest) -> ImagePayload:
        try:
            data = base64.b64decode(payload.image_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise PromptError(f"image_b64 is not valid base64: {exc}") from exc
        return ImagePayload(data=data, media_type=payload.media_type)

    def score_response(outcome: ScoreOutcome) -> schemas.ScoreResponse:
        return schemas.ScoreResponse(
            value=outcome.score.value,
            mode=outcome.score.mode.value,
            place_mass=outcome.score.place_mass,
            raw_text=outcome.raw_text,
            one_decimal=outcome.one_decimal,
            template_version=outcome.bundle.template_version,
            model_id=settings.model_id,
        )

    @app.get("/healthz", response_model=schemas.HealthResponse)
    def healthz():
        return schemas.HealthResponse(
            status="ok",
            model_id=settings.model_id,
            backend=settings.endpoint,
            template_version=TEMPLATE_VERSION,
        )

    @app.post("/v1/score", response_model=schemas.ScoreResponse)
    def score(payload: schemas.ScoreRequest):
        outcome = evaluator.score(
            decode_image(payload),
            payload.caption,
            references=payload.references,
            config=metric_config(payload),
        )
        return score_response(outcome)

    @app.post("/v1/explain", response_model=schemas.ExplainResponse)
    def explain(payload: schemas.ScoreRequest):
        outcome, explanation = evaluator.explain(
            decode_image(payload),
            payload.caption,
            references=payload.references,
            config=metric_config(payload),
        )
        return schemas.ExplainResponse(score=score_response(outcome), explanation=explanation)

    def run_one(
        dataset_text: str,
        options: schemas.MetricOptions,
        expect: str | None,
        policy: str | None,
        image_root: str | None,
    ):
        dataset = parse_dataset_text(dataset_text, kind=DatasetKind(expect) if expect else None)
        report = run_benchmark(
            dataset,
            BenchmarkSettings(
                backend=backend,
                model_id=settings.model_id,
                metric=metric_config(options),
                cache=cache,
                seed=settings.seed,
                image_root=Path(image_root) if image_root else None,
                judgment_policy=JudgmentPolicy(policy) if policy else None,
            ),
        )
        return schemas.BenchmarkResponse(
            summary=report.summary, items=report.items, table=report.render_table()
        )

    @app.post("/v1/benchmark", response_model=schemas.BenchmarkResponse)
    def benchmark(payload: schemas.BenchmarkRequest):
        return run_one(
            payload.dataset_text, payload, payload.expect_schema, payload.judgment_policy,
            payload.image_root,
        )

    @app.post("/v1/ablate", response_model=schemas.AblateResponse)
    def ablate(payload: schemas.AblateRequest):
        reports = []
        for subset in payload.subsets:
            options = payload.model_copy(update={"criteria": subset})
            reports.append(
                run_one(payload.dataset_text, options, "judged", payload.judgment_policy,
                        payload.image_root)
            )
        return schemas.AblateResponse(reports=reports)

    return app
