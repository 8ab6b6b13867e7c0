"""Locating the numeric score inside a generated token stream.

Models asked to "print the score only" still sometimes wrap it in extra text
("Score: 0.75"), so the score is found by scanning the concatenated token text
for the first (or, in explanation-first mode, last) number shaped like ``d``,
``d.d`` or ``d.dd``.  Each digit of the match must then map onto a whole token
(optionally with a single leading space, a common tokenizer artifact) so that
the per-digit probability distributions can be read off that position's
alternatives.  Anything else fails with a typed error rather than a guess.
"""

from __future__ import annotations

import enum
import math
import re
from bisect import bisect_right
from dataclasses import dataclass

from .backends import GenerationResult
from .errors import (
    BackendConfigError,
    MissingLogprobsError,
    NoScoreError,
    ScoreOutOfRangeError,
    TokenGranularityError,
)
from .scoring import DigitDistribution

#: A candidate score: single digit with up to two decimals, not preceded by a
#: digit or a decimal point.  Trailing digits beyond the second decimal are
#: deliberately left unconsumed (a third decimal place is ignored).
_SCORE_RE = re.compile(r"(?<![0-9.])([0-9])(?:\.([0-9])([0-9])?)?")

#: Any decimal number, for raw-score parsing of free-form output text.
_NUMBER_RE = re.compile(r"(?<![0-9.])[0-9]+(?:\.[0-9]+)?")


class SpanKind(str, enum.Enum):
    FRACTIONAL = "fractional"
    UNITS_EDGE = "units_edge"


class ScanDirection(str, enum.Enum):
    """Where to look for the score: start of output (default) or end (explanation-first)."""

    FROM_START = "from_start"
    FROM_END = "from_end"


@dataclass(frozen=True)
class ScoreSpan:
    """Token positions of a located score.

    ``integer_pos`` is the token holding the units digit.  ``decimal_pos``
    holds the token index of each decimal digit (0..2 entries; empty only for
    the integer-only output "0").  ``kind`` is UNITS_EDGE when the extracted
    integer part is 1, in which case smoothing reads the units position.
    """

    kind: SpanKind
    integer_pos: int
    decimal_pos: tuple[int, ...]
    raw_text: str


def _candidate_matches(text: str):
    for match in _SCORE_RE.finditer(text):
        if match.group(2) is None:
            # Bare integer: reject if it is just the head of a longer integer
            # (e.g. the "1" in "10").
            after = text[match.end() : match.end() + 1]
            if after.isdigit():
                continue
        yield match


def extract_score_span(
    result: GenerationResult, scan: ScanDirection = ScanDirection.FROM_START
) -> ScoreSpan:
    """Locate the score inside a generation and map its digits to token indices.

    Raises NoScoreError when no number of the expected shape occurs,
    TokenGranularityError when a digit of the matched number shares its token
    with other characters (beyond a single leading space), and
    ScoreOutOfRangeError when the matched number's integer part exceeds 1.
    """
    tokens = [t.token for t in result.tokens]
    text = "".join(tokens)
    matches = list(_candidate_matches(text))
    if not matches:
        raise NoScoreError(f"no score of shape d, d.d or d.dd in output {text!r}")
    match = matches[-1] if scan is ScanDirection.FROM_END else matches[0]

    # Cumulative end offset of each token, for char -> token index lookup.
    ends: list[int] = []
    total = 0
    for tok in tokens:
        total += len(tok)
        ends.append(total)

    def token_at(char_pos: int) -> int:
        return bisect_right(ends, char_pos)

    def digit_token_index(group: int) -> int:
        pos = match.start(group)
        index = token_at(pos)
        tok = tokens[index]
        if not (tok == match.group(group) or (tok == " " + match.group(group))):
            raise TokenGranularityError(
                f"score digit {match.group(group)!r} is embedded in token {tok!r}; "
                "per-digit probabilities require one token per digit",
                token=tok,
            )
        return index

    if match.group(1) not in ("0", "1"):
        raise ScoreOutOfRangeError(
            f"extracted score {match.group(0)!r} exceeds the 0-1 scale"
        )
    integer_pos = digit_token_index(1)
    decimal_pos = tuple(digit_token_index(g) for g in (2, 3) if match.group(g) is not None)

    # Integer part 1 triggers the units-place path syntactically.
    kind = SpanKind.UNITS_EDGE if match.group(1) == "1" else SpanKind.FRACTIONAL
    return ScoreSpan(kind=kind, integer_pos=integer_pos, decimal_pos=decimal_pos, raw_text=match.group(0))


def _digit_of(token: str) -> int | None:
    if len(token) == 1 and token.isdigit():
        return int(token)
    if len(token) == 2 and token[0] == " " and token[1].isdigit():
        return int(token[1])
    return None


def _distribution_at(result: GenerationResult, position: int) -> DigitDistribution:
    alternatives = result.tokens[position].alternatives
    if not alternatives:
        raise MissingLogprobsError(
            f"no alternative logprobs at token position {position}; cannot build digit distribution"
        )
    probs = [0.0] * 10
    seen = [False] * 10
    # Alternatives are sorted by descending logprob; when a digit appears both
    # bare and space-prefixed, keep its most probable token.
    for alt in alternatives:
        digit = _digit_of(alt.token)
        if digit is not None and not seen[digit]:
            probs[digit] = math.exp(alt.logprob)
            seen[digit] = True
    try:
        return DigitDistribution(tuple(probs))
    except ValueError as exc:
        raise BackendConfigError(
            f"malformed backend probabilities at token position {position}: {exc}"
        ) from exc


def digit_distributions(result: GenerationResult, span: ScoreSpan) -> tuple[DigitDistribution, ...]:
    """Build the digit distributions smoothing needs for a located span.

    Fractional spans yield exactly two distributions; a missing second (or
    first) decimal place is filled with a point mass on digit 0.  Units-edge
    spans yield the single units-position distribution.
    """
    if span.kind is SpanKind.UNITS_EDGE:
        return (_distribution_at(result, span.integer_pos),)
    dists = [_distribution_at(result, pos) for pos in span.decimal_pos]
    while len(dists) < 2:
        dists.append(DigitDistribution.point_mass(0))
    return tuple(dists)


def parse_raw_score(text: str, scan: ScanDirection = ScanDirection.FROM_START) -> float:
    """Parse the raw numeric score out of free-form output text.

    Used for sampling mode and for backends that cannot report logprobs.
    Raises NoScoreError when no number occurs and ScoreOutOfRangeError when
    the found number exceeds 1.
    """
    matches = _NUMBER_RE.findall(text)
    if not matches:
        raise NoScoreError(f"no numeric score in output {text!r}")
    value = float(matches[-1] if scan is ScanDirection.FROM_END else matches[0])
    if value > 1.0:
        raise ScoreOutOfRangeError(f"parsed score {value} exceeds 1.0")
    return value
