"""Reference-free, explainable image-caption evaluation.

A large multimodal model judges each (image, caption) pair; the judge's
per-digit token probabilities are smoothed into a continuous score, and the
same conversation can be extended to ask the model why.  The package ships
the metric itself, prompt templates, backend clients (HTTP and scripted mock),
benchmark harnesses with rank statistics, a generation cache, a FastAPI
service wrapping it all, and a CLI client.
"""

from .backends import (
    DecodeParams,
    FinishReason,
    GenerationRequest,
    GenerationResult,
    HttpBackend,
    ImagePayload,
    MockBackend,
    ScriptedGeneration,
    TokenAlternative,
    TokenLogprob,
    configure_mock,
)
from .cache import CacheKey, CacheStore, key_of
from .datasets import (
    DatasetKind,
    FoilItem,
    JudgedCaption,
    JudgmentPolicy,
    PairwiseItem,
    Statistic,
    flatten_judgments,
    load_dataset,
    parse_dataset_text,
)
from .errors import FleurError
from .evaluator import Evaluator, MetricConfig, MetricMode, ScoreOutcome
from .extraction import (
    ScanDirection,
    ScoreSpan,
    SpanKind,
    digit_distributions,
    extract_score_span,
    parse_raw_score,
)
from .harness import BenchmarkReport, BenchmarkSettings, run_benchmark
from .prompts import (
    TEMPLATE_VERSION,
    GradingCriteria,
    PromptBundle,
    PromptOrdering,
    build_criteria,
    render_explanation_turn,
    render_score_prompt,
)
from .ranking import PairCounts, foil_accuracy, pair_counts, pairwise_accuracy, tau_b, tau_c
from .scoring import (
    DigitDistribution,
    FleurScore,
    SamplingConfig,
    ScoreMode,
    resolve_units_edge,
    sampled_score,
    smooth_score,
)

__version__ = "0.1.0"
