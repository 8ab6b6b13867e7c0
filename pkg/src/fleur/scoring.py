"""Score smoothing: turn per-digit token probabilities into a continuous caption score.

The raw score a multimodal judge prints (e.g. ``0.85``) is quantized and
tie-prone.  Smoothing replaces each decimal digit with its probability-weighted
expectation over the digit tokens 0..9 at that output position:

    score = 0.1 * E[digit at first decimal] + 0.01 * E[digit at second decimal]

Probabilities are used exactly as the backend reports them; mass assigned to
non-digit tokens is simply absent, so a place's digit mass may sum below one.
The observed mass per place is surfaced for diagnostics instead of being
renormalized away.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass

from .errors import NoScoreError

#: Allowed overshoot of the digit-mass sum, to absorb float rounding.
MASS_SLACK = 1e-9


class ScoreMode(str, enum.Enum):
    SMOOTHED = "smoothed"
    RAW = "raw"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class DigitDistribution:
    """Probability mass over the ten digit tokens at one generated position.

    ``probs[i]`` is the backend-reported probability of digit ``i``.  Entries
    must lie in [0, 1] and sum to at most 1 (plus float slack); the sum may be
    well below 1 when non-digit tokens carry mass.
    """

    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) != 10:
            raise ValueError(f"expected 10 digit probabilities, got {len(self.probs)}")
        for i, p in enumerate(self.probs):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"digit {i} probability {p!r} outside [0, 1]")
        total = sum(self.probs)
        if total > 1.0 + MASS_SLACK:
            raise ValueError(f"digit probabilities sum to {total!r} > 1")

    @classmethod
    def point_mass(cls, digit: int) -> "DigitDistribution":
        """Distribution certain of one digit."""
        if not 0 <= digit <= 9:
            raise ValueError(f"digit must be 0..9, got {digit}")
        return cls(tuple(1.0 if i == digit else 0.0 for i in range(10)))

    @property
    def mass(self) -> float:
        """Total digit probability observed at this position."""
        return sum(self.probs)

    def expectation(self) -> float:
        """Probability-weighted mean digit value."""
        return sum(i * p for i, p in enumerate(self.probs))


@dataclass(frozen=True)
class FleurScore:
    """A caption score in [0, 1] plus how it was obtained.

    ``place_mass`` records the total digit mass observed at each smoothed
    place (diagnostic; meaningful only in smoothed mode — the units-place edge
    case stores its single observed mass in the first slot).
    """

    value: float
    mode: ScoreMode
    place_mass: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SamplingConfig:
    """Settings for the sampling-based estimator (average of stochastic raw scores)."""

    n_samples: int
    temperature: float = 0.2
    nucleus_mass: float = 0.7

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.temperature <= 0:
            raise ValueError("sampling requires temperature > 0")
        if not 0.0 < self.nucleus_mass <= 1.0:
            raise ValueError("nucleus_mass must be in (0, 1]")


def smooth_score(place1: DigitDistribution, place2: DigitDistribution) -> FleurScore:
    """Smooth the two decimal places of a raw score into a continuous value.

    ``value = 0.1 * sum(i * place1[i]) + 0.01 * sum(i * place2[i])``.
    Deterministic in its inputs; no renormalization of digit mass.
    """
    value = 0.1 * place1.expectation() + 0.01 * place2.expectation()
    return FleurScore(value=value, mode=ScoreMode.SMOOTHED, place_mass=(place1.mass, place2.mass))


def resolve_units_edge(units: DigitDistribution) -> FleurScore:
    """Smooth the special case where the greedy raw output was "1.0".

    Only decimal places are smoothed normally, which would discard the units
    digit entirely.  Instead the units-place distribution is read as: mass on
    "0" behaves like a raw score of 0.9, mass on "1" like 1.0, giving
    ``value = 0.9 * P(units=0) + 1.0 * P(units=1)``.
    """
    value = 0.9 * units.probs[0] + 1.0 * units.probs[1]
    return FleurScore(value=value, mode=ScoreMode.SMOOTHED, place_mass=(units.mass, 0.0))


def sampled_score(raw_scores: Sequence[float]) -> FleurScore:
    """Average parsed raw scores from stochastic generations (sampling estimator)."""
    if not raw_scores:
        raise NoScoreError("no usable samples: every stochastic generation failed to parse")
    for s in raw_scores:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"raw score {s!r} outside [0, 1]")
    return FleurScore(value=sum(raw_scores) / len(raw_scores), mode=ScoreMode.SAMPLED)
