"""Benchmark orchestration: drive the metric over a dataset and report statistics.

Items are scored by a bounded worker pool (sized by the backend's concurrency
limit), assembled in input order regardless of completion order, and reduced
to the statistic the dataset header declares.  Reports are line-delimited JSON
(one summary record, then one record per item) and contain no timing fields,
so identical runs — including cold-cache vs warm-cache reruns — serialize to
identical bytes.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .backends import Backend, ImagePayload
from .cache import CacheStore
from .datasets import (
    DatasetKind,
    FoilItem,
    JudgedCaption,
    JudgmentPolicy,
    LoadedDataset,
    PairwiseItem,
    Statistic,
    flatten_judgments,
)
from .errors import (
    DatasetError,
    MissingLogprobsError,
    NoScoreError,
    ScoreOutOfRangeError,
    TokenGranularityError,
    TruncationError,
    UndefinedStatisticError,
)
from .evaluator import Evaluator, MetricConfig, MetricMode, ScoreOutcome
from .prompts import build_criteria
from .ranking import foil_accuracy, pair_counts, pairwise_accuracy, tau_b, tau_c

logger = logging.getLogger(__name__)

#: Per-item failures that degrade a run instead of aborting it.  Transport and
#: configuration errors still propagate: the run cannot proceed without a
#: working backend.
ITEM_ERRORS = (
    NoScoreError,
    TokenGranularityError,
    MissingLogprobsError,
    ScoreOutOfRangeError,
    TruncationError,
)

#: Fraction of NoScore items beyond which a run is marked degraded.
DEGRADED_THRESHOLD = 0.01


@dataclass(frozen=True)
class BenchmarkReport:
    """One benchmark run: configuration echo, statistic, per-item table, diagnostics."""

    summary: dict[str, Any]
    items: list[dict[str, Any]]

    def to_records(self) -> list[dict[str, Any]]:
        return [self.summary, *self.items]

    def to_text(self) -> str:
        return "\n".join(json.dumps(r, ensure_ascii=False) for r in self.to_records()) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def render_table(self) -> str:
        """Human-readable summary for standard output."""
        s = self.summary
        lines = [
            f"dataset    : {s['dataset_id']} ({s['schema']}, {len(self.items)} items)",
            f"metric     : {s['mode']} | criteria={s['criteria_subset'] or 'none'} | "
            f"templates {s['template_version']} | model {s['model_id']}",
        ]
        values = s["statistic_values"]
        if "status" in values:
            lines.append(f"statistic  : {s['statistic']} undefined ({values['reason']})")
        elif s["statistic"] == Statistic.PAIRWISE_ACCURACY.value:
            per = "  ".join(f"{cat}={acc:.4f}" for cat, acc in values["per_category"].items())
            lines.append(f"accuracy   : {per}  average={values['average']:.4f}")
        else:
            name, value = next(iter(values.items()))
            lines.append(f"statistic  : {name} = {value:.4f}")
        d = s["diagnostics"]
        lines.append(
            f"items      : scored={d['items_scored']} errored={d['items_errored']} "
            f"(no_score={d['no_score']}, token_granularity={d['token_granularity']})"
        )
        if d["mean_place_mass"] is not None:
            lines.append(
                "place mass : "
                + " ".join(f"{m:.4f}" for m in d["mean_place_mass"])
                + ("  [DEGRADED]" if d["degraded"] else "")
            )
        elif d["degraded"]:
            lines.append("run        : DEGRADED")
        return "\n".join(lines)


@dataclass
class _ItemResult:
    row: dict[str, Any]
    outcomes: tuple[ScoreOutcome, ...] = ()
    error: Exception | None = None


def _load_image(image_ref: str, image_root: Path | None) -> ImagePayload:
    """Resolve an image reference to payload bytes.

    Without an image root the reference itself is embedded as the payload:
    benchmark records identify images by path or digest, and backends that
    never decode pixels (the scripted mock) only need a stable byte string.
    """
    if image_root is not None:
        path = image_root / image_ref
        media_type = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
        return ImagePayload(data=path.read_bytes(), media_type=media_type)
    return ImagePayload(data=image_ref.encode("utf-8"), media_type="application/x-image-ref")


@dataclass(frozen=True)
class BenchmarkSettings:
    """Everything a run needs besides the dataset itself."""

    backend: Backend
    model_id: str
    metric: MetricConfig
    cache: CacheStore | None = None
    seed: int | None = None
    image_root: Path | None = None
    judgment_policy: JudgmentPolicy | None = None


def _score_judged(evaluator, item: JudgedCaption, settings: BenchmarkSettings, index: int) -> _ItemResult:
    refs = list(item.references) if settings.metric.mode is MetricMode.REF else None
    outcome = evaluator.score(
        _load_image(item.image_ref, settings.image_root), item.candidate, references=refs,
        config=settings.metric,
    )
    row = {
        "record": "item",
        "index": index,
        "image_ref": item.image_ref,
        "candidate": item.candidate,
        "score": outcome.score.value,
        "raw_text": outcome.raw_text,
        "place_mass": list(outcome.score.place_mass),
        "one_decimal": outcome.one_decimal,
    }
    return _ItemResult(row=row, outcomes=(outcome,))


def _score_pairwise(evaluator, item: PairwiseItem, settings: BenchmarkSettings, index: int) -> _ItemResult:
    image = _load_image(item.image_ref, settings.image_root)
    outcome_a = evaluator.score(image, item.caption_a, config=settings.metric)
    outcome_b = evaluator.score(image, item.caption_b, config=settings.metric)
    chosen, other = (
        (outcome_a, outcome_b) if item.winner == "a" else (outcome_b, outcome_a)
    )
    row = {
        "record": "item",
        "index": index,
        "image_ref": item.image_ref,
        "category": item.category,
        "winner": item.winner,
        "score_a": outcome_a.score.value,
        "score_b": outcome_b.score.value,
        "correct": chosen.score.value > other.score.value,
    }
    return _ItemResult(row=row, outcomes=(outcome_a, outcome_b))


def _score_foil(evaluator, item: FoilItem, settings: BenchmarkSettings, index: int) -> _ItemResult:
    image = _load_image(item.image_ref, settings.image_root)
    outcome_true = evaluator.score(image, item.true_caption, config=settings.metric)
    outcome_foil = evaluator.score(image, item.foil_caption, config=settings.metric)
    row = {
        "record": "item",
        "index": index,
        "image_ref": item.image_ref,
        "true_score": outcome_true.score.value,
        "foil_score": outcome_foil.score.value,
        "correct": outcome_true.score.value > outcome_foil.score.value,
    }
    return _ItemResult(row=row, outcomes=(outcome_true, outcome_foil))


_SCORERS = {
    DatasetKind.JUDGED: _score_judged,
    DatasetKind.PAIRWISE: _score_pairwise,
    DatasetKind.FOIL: _score_foil,
}


def _validate_ref_mode(dataset: LoadedDataset, metric: MetricConfig) -> None:
    if metric.mode is not MetricMode.REF:
        return
    if dataset.declaration.kind is not DatasetKind.JUDGED:
        raise DatasetError(
            f"reference mode needs reference captions, which {dataset.declaration.kind.value!r} "
            "datasets do not carry"
        )
    for index, item in enumerate(dataset.items):
        if not item.references:
            raise DatasetError(f"item {index} has no references; reference mode requires them")


def _statistic_values(
    dataset: LoadedDataset, results: list[_ItemResult], policy: JudgmentPolicy | None
) -> dict[str, Any]:
    statistic = dataset.declaration.statistic
    scored = [r for r in results if r.error is None]
    try:
        if statistic in (Statistic.TAU_B, Statistic.TAU_C):
            ok = {r.row["index"] for r in scored}
            records = dataset.items
            xs, slots = flatten_judgments(records, policy)
            pairs = [(x, results[slot].outcomes[0].score.value) for x, slot in zip(xs, slots) if slot in ok]
            if len(pairs) < 2:
                raise UndefinedStatisticError("fewer than two scored observations")
            counts = pair_counts([p[0] for p in pairs], [p[1] for p in pairs])
            value = tau_b(counts) if statistic is Statistic.TAU_B else tau_c(counts)
            return {statistic.value: value, "observations": len(pairs)}
        if statistic is Statistic.PAIRWISE_ACCURACY:
            items = [dataset.items[r.row["index"]] for r in scored]
            scores = [(r.row["score_a"], r.row["score_b"]) for r in scored]
            if not items:
                raise UndefinedStatisticError("no scored items")
            accuracy = pairwise_accuracy(items, scores)
            return {"per_category": accuracy.per_category, "average": accuracy.average}
        items = [dataset.items[r.row["index"]] for r in scored]
        scores = [(r.row["true_score"], r.row["foil_score"]) for r in scored]
        if not items:
            raise UndefinedStatisticError("no scored items")
        return {Statistic.FOIL_ACCURACY.value: foil_accuracy(items, scores)}
    except UndefinedStatisticError as exc:
        return {"status": "undefined", "reason": str(exc)}


def run_benchmark(dataset: LoadedDataset, settings: BenchmarkSettings) -> BenchmarkReport:
    """Score every dataset item, compute the declared statistic, assemble the report."""
    _validate_ref_mode(dataset, settings.metric)
    policy = settings.judgment_policy or dataset.declaration.judgment_policy
    evaluator = Evaluator(
        settings.backend, settings.model_id, cache=settings.cache, seed=settings.seed
    )
    scorer = _SCORERS[dataset.declaration.kind]

    def run_item(pair):
        index, item = pair
        try:
            return scorer(evaluator, item, settings, index)
        except ITEM_ERRORS as exc:
            logger.warning("item %d failed: %s", index, exc)
            row = {
                "record": "item",
                "index": index,
                "image_ref": item.image_ref,
                "error": type(exc).__name__,
                "detail": str(exc),
            }
            return _ItemResult(row=row, error=exc)

    workers = max(1, settings.backend.concurrency)
    if workers == 1:
        results = [run_item(pair) for pair in enumerate(dataset.items)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_item, enumerate(dataset.items)))

    statistic_values = _statistic_values(dataset, results, policy)
    scored = [r for r in results if r.error is None]
    no_score = sum(1 for r in results if isinstance(r.error, NoScoreError))
    masses = [o.score.place_mass for r in scored for o in r.outcomes]
    criteria = build_criteria(settings.metric.criteria, version=settings.metric.template_version)
    diagnostics = {
        "items_total": len(dataset.items),
        "items_scored": len(scored),
        "items_errored": len(results) - len(scored),
        "no_score": no_score,
        "token_granularity": sum(1 for r in results if isinstance(r.error, TokenGranularityError)),
        "one_decimal": sum(1 for r in scored for o in r.outcomes if o.one_decimal),
        "mean_place_mass": (
            [sum(m[0] for m in masses) / len(masses), sum(m[1] for m in masses) / len(masses)]
            if masses
            else None
        ),
        "degraded": len(dataset.items) > 0 and no_score / len(dataset.items) > DEGRADED_THRESHOLD,
    }
    sampling = settings.metric.sampling
    summary = {
        "record": "summary",
        "dataset_id": dataset.declaration.dataset_id,
        "schema": dataset.declaration.kind.value,
        "statistic": dataset.declaration.statistic.value,
        "mode": settings.metric.mode.value,
        "template_version": settings.metric.template_version,
        "model_id": settings.model_id,
        "criteria_subset": "".join(sorted(settings.metric.criteria)),
        "criteria": [[anchor, text] for anchor, text in criteria.entries],
        "ordering": settings.metric.ordering.value,
        "judgment_policy": policy.value if policy else None,
        "sampling": (
            {
                "n_samples": sampling.n_samples,
                "temperature": sampling.temperature,
                "nucleus_mass": sampling.nucleus_mass,
            }
            if settings.metric.mode is MetricMode.SAMPLED
            else None
        ),
        "seed": settings.seed,
        "statistic_values": statistic_values,
        "diagnostics": diagnostics,
    }
    return BenchmarkReport(summary=summary, items=[r.row for r in results])
