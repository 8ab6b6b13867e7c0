"""Rendering of caption-evaluation prompts from versioned template assets.

Template files live under ``fleur/templates/<version>/`` and are byte-normative:
whitespace, line breaks, and the absence of a trailing newline are part of the
contract, so benchmark runs are reproducible across releases.  Placeholders are
literal markers (``{caption}``, ``{reference caption set}``,
``{grading_criteria}``) substituted by plain string replacement; the caption is
substituted last so caption text can never inject into another placeholder.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

from .errors import PromptError

TEMPLATE_VERSION = "v1"

#: Criteria groups selectable for the grading-criteria block: ``a`` carries the
#: 0.0 and 1.0 anchors, ``b`` the 0.3 anchor, ``c`` the 0.7 anchor.
CRITERIA_GROUPS: dict[str, tuple[float, ...]] = {
    "a": (0.0, 1.0),
    "b": (0.3,),
    "c": (0.7,),
}


class PromptOrdering(str, enum.Enum):
    """Whether the model is asked for the score first or the explanation first."""

    SCORE_THEN_EXPLANATION = "score_then_explanation"
    EXPLANATION_THEN_SCORE = "explanation_then_score"


@dataclass(frozen=True)
class GradingCriteria:
    """Ordered (anchor score, guideline text) pairs embedded in the prompt."""

    entries: tuple[tuple[float, str], ...]

    def __post_init__(self):
        anchors = [a for a, _ in self.entries]
        if any(not 0.0 <= a <= 1.0 for a in anchors):
            raise PromptError(f"criteria anchors must lie in [0, 1], got {anchors}")
        if any(b <= a for a, b in zip(anchors, anchors[1:])):
            raise PromptError(f"criteria anchors must be strictly increasing, got {anchors}")


@dataclass(frozen=True)
class PromptBundle:
    """A rendered conversation ready to send: turns, image handle, ordering."""

    text: str
    turns: tuple[tuple[str, str], ...]
    ordering: PromptOrdering
    image_ref: str = ""
    template_version: str = TEMPLATE_VERSION

    def __post_init__(self):
        if not self.turns:
            raise PromptError("prompt bundle must contain at least one turn")

    def with_image(self, image_ref: str) -> "PromptBundle":
        return replace(self, image_ref=image_ref)


@lru_cache(maxsize=None)
def _asset(version: str, name: str) -> str:
    path = resources.files("fleur").joinpath("templates", version, name)
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise PromptError(f"unknown template asset {name!r} for version {version!r}") from None


@lru_cache(maxsize=None)
def _criteria_texts(version: str) -> dict[float, str]:
    raw = json.loads(_asset(version, "criteria.json"))
    return {float(anchor): text for anchor, text in raw.items()}


def explanation_follow_up(version: str = TEMPLATE_VERSION) -> str:
    """The fixed follow-up question that requests an explanation for the score."""
    return _asset(version, "explain.txt")


def build_criteria(subset, version: str = TEMPLATE_VERSION) -> GradingCriteria:
    """Assemble grading criteria for a subset of the groups ``{a, b, c}``.

    The empty subset is valid and yields empty criteria (the rendered prompt
    then omits the Grading Criteria block entirely).
    """
    letters = set(subset)
    unknown = letters - CRITERIA_GROUPS.keys()
    if unknown:
        raise PromptError(f"unknown criteria group(s) {sorted(unknown)}; expected subset of {{a, b, c}}")
    texts = _criteria_texts(version)
    anchors = sorted(a for letter in letters for a in CRITERIA_GROUPS[letter])
    return GradingCriteria(entries=tuple((a, texts[a]) for a in anchors))


def _criteria_block(criteria: GradingCriteria) -> str:
    if not criteria.entries:
        return ""
    lines = "\n".join(f"{anchor:.1f}: {text}" for anchor, text in criteria.entries)
    return f"\nGrading Criteria:\n\n{lines}\n"


def render_score_prompt(
    caption: str,
    criteria: GradingCriteria,
    references: list[str] | None = None,
    ordering: PromptOrdering = PromptOrdering.SCORE_THEN_EXPLANATION,
    version: str = TEMPLATE_VERSION,
) -> PromptBundle:
    """Render the score-request prompt for a candidate caption.

    Without references this is the reference-free prompt; with references the
    reference-augmented variant is used ("candidate caption" wording, a
    Reference Captions block with each reference double-quoted on its own
    line, and a "Candidate Caption:" label).
    """
    if not caption or not caption.strip():
        raise PromptError("caption must be non-empty")
    if references is not None and len(references) == 0:
        raise PromptError("reference list, when given, must be non-empty")

    name = "score_ref" if references is not None else "score"
    if ordering is PromptOrdering.EXPLANATION_THEN_SCORE:
        name += "_explain_first"
    text = _asset(version, f"{name}.txt")
    text = text.replace("{grading_criteria}", _criteria_block(criteria))
    if references is not None:
        ref_block = "\n".join(f'"{ref}"' for ref in references)
        text = text.replace("{reference caption set}", ref_block)
    text = text.replace("{caption}", caption)
    return PromptBundle(
        text=text,
        turns=(("user", text),),
        ordering=ordering,
        template_version=version,
    )


def render_explanation_turn(prior: PromptBundle, emitted_score_text: str) -> PromptBundle:
    """Extend a scored conversation with the explanation request.

    The model's emitted score text is appended verbatim as the assistant turn,
    followed by the fixed follow-up question as a new user turn.
    """
    follow_up = explanation_follow_up(prior.template_version)
    turns = prior.turns + (("assistant", emitted_score_text), ("user", follow_up))
    return replace(prior, turns=turns)
