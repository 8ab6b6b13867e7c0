"""Shared fixture builders: scripted generations, datasets, and mock scripts."""

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from fleur.backends import (
    GenerationResult,
    FinishReason,
    ImagePayload,
    ScriptedGeneration,
    TokenAlternative,
    TokenLogprob,
    script_to_dict,
)

# Non-digit tokens used to pad alternative lists up to the top-K width.
FILLERS = [
    "the", "a", "is", "and", "of", "in", "it", "on", "to", "an",
    "at", "as", "or", "be", "by", "so", "up", "we", "he", "no",
]

NEG_INF_ISH = -100.0  # effectively zero probability, but JSON-safe


def alternatives_from_probs(probs: dict[str, float], pad_to: int = 20) -> tuple[TokenAlternative, ...]:
    """Alternative list carrying the given token probabilities, padded and sorted."""
    alts = [TokenAlternative(token, math.log(p)) for token, p in probs.items() if p > 0]
    for filler in FILLERS:
        if len(alts) >= pad_to:
            break
        if filler not in probs:
            alts.append(TokenAlternative(filler, NEG_INF_ISH))
    alts.sort(key=lambda a: a.logprob, reverse=True)
    return tuple(alts)


def point_token(token: str) -> TokenLogprob:
    """A token generated with certainty (probability 1, all alternatives negligible)."""
    return TokenLogprob(token=token, logprob=0.0, alternatives=alternatives_from_probs({token: 1.0}))


def dist_token(token: str, probs: dict[str, float]) -> TokenLogprob:
    """A generated token with an explicit probability table over alternatives."""
    return TokenLogprob(
        token=token, logprob=math.log(probs[token]), alternatives=alternatives_from_probs(probs)
    )


def result_from_tokens(tokens, finish: FinishReason = FinishReason.STOP) -> GenerationResult:
    return GenerationResult(tokens=tuple(tokens), finish_reason=finish)


def score_result(text: str) -> GenerationResult:
    """A generation emitting ``text`` one character per token, each a point mass."""
    return result_from_tokens([point_token(ch) for ch in text])


def scripted_scores(texts) -> list[ScriptedGeneration]:
    return [ScriptedGeneration(result=score_result(t)) for t in texts]


def write_script(path: Path, script) -> Path:
    path.write_text(json.dumps(script_to_dict(script)), encoding="utf-8")
    return path


@pytest.fixture
def image() -> ImagePayload:
    return ImagePayload(data=b"\x89PNG fake bytes for tests", media_type="image/png")


# ---------------------------------------------------------------------------
# Hermetic benchmark fixtures: datasets plus the mock scripts that drive them.

JUDGED_HEADER = {
    "record": "header",
    "dataset_id": "judged-mini",
    "schema": "judged",
    "statistic": "tau_c",
    "judgment_policy": "per_rating",
}

#: Six judged items with strictly increasing human ratings; the paired mock
#: script emits strictly increasing scores, so tau-c is exactly 1.0.
JUDGED_SCORES = ["0.15", "0.25", "0.35", "0.45", "0.55", "0.65"]


def judged_dataset_lines() -> list[str]:
    lines = [json.dumps(JUDGED_HEADER)]
    for rank in range(1, 7):
        lines.append(
            json.dumps(
                {
                    "image_ref": f"im{rank}.jpg",
                    "candidate": f"Candidate caption number {rank}.",
                    "references": [f"Reference for item {rank}."],
                    "human_ratings": [rank],
                    "scale": {"min": 1, "max": 6},
                }
            )
        )
    return lines


#: Four pairwise items, one per category; the mock prefers the winner three
#: times and ties once (MM), for accuracy 3/4 per hand count.
PAIRWISE_ROWS = [
    ("HC", "a", "0.85", "0.35"),
    ("HI", "b", "0.25", "0.75"),
    ("HM", "a", "0.95", "0.15"),
    ("MM", "b", "0.45", "0.45"),
]


def pairwise_dataset_lines() -> list[str]:
    lines = [
        json.dumps({"record": "header", "dataset_id": "pairwise-mini", "schema": "pairwise"})
    ]
    for index, (category, winner, _, _) in enumerate(PAIRWISE_ROWS):
        lines.append(
            json.dumps(
                {
                    "image_ref": f"pair{index}.jpg",
                    "caption_a": f"First caption for pair {index}.",
                    "caption_b": f"Second caption for pair {index}.",
                    "category": category,
                    "winner": winner,
                }
            )
        )
    return lines


#: Ten foil items: nine strict wins for the intact caption, one tie -> 0.9.
FOIL_ROWS = [("0.85", "0.35")] * 9 + [("0.45", "0.45")]


def foil_dataset_lines() -> list[str]:
    lines = [json.dumps({"record": "header", "dataset_id": "foil-mini", "schema": "foil"})]
    for index in range(10):
        lines.append(
            json.dumps(
                {
                    "image_ref": f"foil{index}.jpg",
                    "true_caption": f"A cat sits on mat number {index}.",
                    "foil_caption": f"A dog sits on mat number {index}.",
                }
            )
        )
    return lines


def judged_script() -> list[ScriptedGeneration]:
    return scripted_scores(JUDGED_SCORES)


def pairwise_script() -> list[ScriptedGeneration]:
    texts = []
    for _, _, score_a, score_b in PAIRWISE_ROWS:
        texts.extend([score_a, score_b])
    return scripted_scores(texts)


def foil_script() -> list[ScriptedGeneration]:
    texts = []
    for true_score, foil_score in FOIL_ROWS:
        texts.extend([true_score, foil_score])
    return scripted_scores(texts)


@pytest.fixture
def judged_dataset_file(tmp_path) -> Path:
    path = tmp_path / "judged.jsonl"
    path.write_text("\n".join(judged_dataset_lines()) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def pairwise_dataset_file(tmp_path) -> Path:
    path = tmp_path / "pairwise.jsonl"
    path.write_text("\n".join(pairwise_dataset_lines()) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def foil_dataset_file(tmp_path) -> Path:
    path = tmp_path / "foil.jsonl"
    path.write_text("\n".join(foil_dataset_lines()) + "\n", encoding="utf-8")
    return path
