"""End-to-end scoring pipeline: render prompt, query the backend, extract, smooth.

The evaluator owns the glue between modules and the cache discipline: greedy
generations are cached under sample index 0, stochastic samples under their
sample index, and explanation turns under the extended conversation.  Metric
modes: ``fleur`` (smoothed, reference-free), ``ref`` (smoothed with reference
captions in the prompt), ``raw`` (literal parsed score), and ``sampled``
(average of stochastic raw scores).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

from .backends import Backend, DecodeParams, FinishReason, GenerationRequest, ImagePayload
from .cache import CacheStore, key_of
from .errors import NoScoreError, PromptError, TransportError, TruncationError
from .extraction import (
    ScanDirection,
    SpanKind,
    digit_distributions,
    extract_score_span,
    parse_raw_score,
)
from .prompts import (
    TEMPLATE_VERSION,
    PromptBundle,
    PromptOrdering,
    build_criteria,
    render_explanation_turn,
    render_score_prompt,
)
from .scoring import FleurScore, SamplingConfig, ScoreMode, resolve_units_edge, sampled_score, smooth_score

logger = logging.getLogger(__name__)


class MetricMode(str, enum.Enum):
    FLEUR = "fleur"
    REF = "ref"
    RAW = "raw"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class MetricConfig:
    """What to compute and how to prompt for it."""

    mode: MetricMode = MetricMode.FLEUR
    criteria: frozenset[str] = frozenset({"a"})
    ordering: PromptOrdering = PromptOrdering.SCORE_THEN_EXPLANATION
    sampling: SamplingConfig | None = None
    template_version: str = TEMPLATE_VERSION
    max_score_tokens: int = 32
    max_explanation_tokens: int = 512

    def __post_init__(self):
        if self.mode is MetricMode.SAMPLED and self.sampling is None:
            object.__setattr__(self, "sampling", SamplingConfig(n_samples=1))
        if self.ordering is PromptOrdering.EXPLANATION_THEN_SCORE:
            # The score arrives after the explanation, so the score request
            # needs the full explanation budget.
            object.__setattr__(self, "max_score_tokens", max(self.max_score_tokens, self.max_explanation_tokens))


@dataclass(frozen=True)
class ScoreOutcome:
    """A computed score plus the artifacts needed for reports and follow-ups."""

    score: FleurScore
    raw_text: str
    bundle: PromptBundle
    one_decimal: bool = False


class Evaluator:
    """Scores (image, caption) pairs against one backend/model pair."""

    def __init__(
        self,
        backend: Backend,
        model_id: str,
        cache: CacheStore | None = None,
        seed: int | None = None,
    ):
        self.backend = backend
        self.model_id = model_id
        self.cache = cache
        self.seed = seed

    def _generate(self, request: GenerationRequest, sample_index: int, template_version: str):
        if self.cache is None:
            return self.backend.generate(request)
        key = key_of(request, sample_index=sample_index, template_version=template_version)
        return self.cache.get_or_generate(key, self.backend, request)

    def _scan(self, config: MetricConfig) -> ScanDirection:
        if config.ordering is PromptOrdering.EXPLANATION_THEN_SCORE:
            return ScanDirection.FROM_END
        return ScanDirection.FROM_START

    @staticmethod
    def _raise_if_truncated(result, config: MetricConfig) -> None:
        # Length-limited output is only a truncation failure when the score
        # never made it out; a score followed by a cut-off tail still counts.
        if result.finish_reason is FinishReason.LENGTH:
            raise TruncationError(
                f"generation hit the {config.max_score_tokens}-token limit before a score was emitted"
            )

    def score(
        self,
        image: ImagePayload,
        caption: str,
        references: list[str] | None = None,
        config: MetricConfig = MetricConfig(),
    ) -> ScoreOutcome:
        """Score one caption against one image under the configured metric mode."""
        criteria = build_criteria(config.criteria, version=config.template_version)
        if config.mode is MetricMode.REF:
            if not references:
                raise PromptError("reference mode requires a non-empty reference caption list")
            refs = list(references)
        else:
            # Reference-free modes must never read the references field.
            refs = None
        bundle = render_score_prompt(
            caption, criteria, references=refs, ordering=config.ordering, version=config.template_version
        ).with_image(image.digest)

        if config.mode is MetricMode.SAMPLED:
            return self._score_sampled(image, bundle, config)

        request = GenerationRequest(
            image=image,
            turns=bundle.turns,
            decode=DecodeParams(max_new_tokens=config.max_score_tokens),
            model_id=self.model_id,
        )
        result = self._generate(request, 0, config.template_version)
        if result.finish_reason is FinishReason.ERROR:
            raise TransportError("backend reported a generation error")
        if config.mode is MetricMode.RAW:
            try:
                value = parse_raw_score(result.text, scan=self._scan(config))
            except NoScoreError:
                self._raise_if_truncated(result, config)
                raise
            return ScoreOutcome(
                score=FleurScore(value=value, mode=ScoreMode.RAW), raw_text=result.text, bundle=bundle
            )
        try:
            span = extract_score_span(result, scan=self._scan(config))
        except NoScoreError:
            self._raise_if_truncated(result, config)
            raise
        dists = digit_distributions(result, span)
        if span.kind is SpanKind.UNITS_EDGE:
            score = resolve_units_edge(dists[0])
            one_decimal = False
        else:
            score = smooth_score(dists[0], dists[1])
            one_decimal = len(span.decimal_pos) < 2
        return ScoreOutcome(score=score, raw_text=result.text, bundle=bundle, one_decimal=one_decimal)

    def _score_sampled(self, image: ImagePayload, bundle: PromptBundle, config: MetricConfig) -> ScoreOutcome:
        sampling: SamplingConfig = config.sampling
        decode = DecodeParams(
            temperature=sampling.temperature,
            nucleus_mass=sampling.nucleus_mass,
            max_new_tokens=config.max_score_tokens,
        )
        values = []
        texts = []
        for index in range(sampling.n_samples):
            seed = None if self.seed is None else self.seed + index
            request = GenerationRequest(
                image=image, turns=bundle.turns, decode=decode, model_id=self.model_id, seed=seed
            )
            result = self._generate(request, index, config.template_version)
            values.append(parse_raw_score(result.text, scan=self._scan(config)))
            texts.append(result.text)
        return ScoreOutcome(score=sampled_score(values), raw_text="\n".join(texts), bundle=bundle)

    def explain(
        self,
        image: ImagePayload,
        caption: str,
        references: list[str] | None = None,
        config: MetricConfig = MetricConfig(),
    ) -> tuple[ScoreOutcome, str]:
        """Score a caption, then ask the model why; returns (outcome, explanation text).

        In explanation-first ordering the scored generation already contains
        the explanation, so no second turn is issued.
        """
        outcome = self.score(image, caption, references=references, config=config)
        if config.ordering is PromptOrdering.EXPLANATION_THEN_SCORE:
            return outcome, outcome.raw_text.strip()
        bundle = render_explanation_turn(outcome.bundle, outcome.raw_text)
        request = GenerationRequest(
            image=image,
            turns=bundle.turns,
            decode=DecodeParams(max_new_tokens=config.max_explanation_tokens),
            model_id=self.model_id,
        )
        result = self._generate(request, 0, config.template_version)
        return outcome, result.text.strip()
