"""Pydantic request/response models for the scoring service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

MetricModeName = Literal["fleur", "ref", "raw", "sampled"]
OrderingName = Literal["score-first", "explanation-first"]


class MetricOptions(BaseModel):
    """Metric knobs shared by every scoring endpoint."""

    mode: MetricModeName = "fleur"
    criteria: str = Field(default="a", description="criteria groups, e.g. '', 'a', 'ab', 'abc'")
    ordering: OrderingName = "score-first"
    n_samples: int = Field(default=8, ge=1)
    temperature: float = Field(default=0.2, gt=0)
    nucleus_mass: float = Field(default=0.7, gt=0, le=1)


class ScoreRequest(MetricOptions):
    image_b64: str
    media_type: str = "image/jpeg"
    caption: str
    references: list[str] | None = None


class ScoreResponse(BaseModel):
    value: float
    mode: str
    place_mass: tuple[float, float]
    raw_text: str
    one_decimal: bool
    template_version: str
    model_id: str


class ExplainResponse(BaseModel):
    score: ScoreResponse
    explanation: str


class BenchmarkRequest(MetricOptions):
    """A benchmark run over an uploaded line-delimited dataset.

    ``image_root`` is a server-side directory against which item image_refs
    are resolved; when omitted, the reference string itself stands in for the
    image bytes (sufficient for scripted-mock runs, where no pixels are read).
    """

    dataset_text: str
    expect_schema: Literal["judged", "pairwise", "foil"] | None = None
    judgment_policy: Literal["per_rating", "mean", "proportion"] | None = None
    image_root: str | None = None


class BenchmarkResponse(BaseModel):
    summary: dict[str, Any]
    items: list[dict[str, Any]]
    table: str


class AblateRequest(MetricOptions):
    """Grading-criteria sweep: one benchmark run per criteria subset."""

    dataset_text: str
    subsets: list[str]
    judgment_policy: Literal["per_rating", "mean", "proportion"] | None = None
    image_root: str | None = None


class AblateResponse(BaseModel):
    reports: list[BenchmarkResponse]


class HealthResponse(BaseModel):
    status: str
    model_id: str
    backend: str
    template_version: str


class ErrorBody(BaseModel):
    error: str
    detail: str
