"""Rank-correlation and preference-accuracy statistics with exhaustive tie accounting.

Pair tallies follow Knight's O(n log n) scheme (sort by one variable, count
strict inversions in the other by merge sort, subtract tie groups) but keep
exhaustive-pair semantics: results are integer-exact and must match a direct
O(n^2) enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import UndefinedStatisticError

if TYPE_CHECKING:
    from .datasets import FoilItem, PairwiseItem

PAIRWISE_CATEGORIES = ("HC", "HI", "HM", "MM")


@dataclass(frozen=True)
class PairCounts:
    """Tallies over all unordered observation pairs of (x, y) data."""

    concordant: int
    discordant: int
    tied_x_only: int
    tied_y_only: int
    tied_both: int
    n: int
    distinct_x: int
    distinct_y: int

    @property
    def total_pairs(self) -> int:
        return self.n * (self.n - 1) // 2


def _tie_pairs(boundaries: np.ndarray) -> int:
    """Sum of C(group, 2) for runs delimited by True entries in ``boundaries``."""
    idx = np.flatnonzero(boundaries)
    sizes = np.diff(idx)
    return int(np.sum(sizes * (sizes - 1) // 2))


def _run_boundaries(values: np.ndarray) -> np.ndarray:
    return np.concatenate(([True], values[1:] != values[:-1], [True]))


def _count_inversions(values: list[float]) -> int:
    """Strict inversions (left > right) via bottom-up merge sort; ties not counted."""
    a = list(values)
    buf = [0.0] * len(a)
    inversions = 0
    width = 1
    while width < len(a):
        for lo in range(0, len(a), 2 * width):
            mid = min(lo + width, len(a))
            hi = min(lo + 2 * width, len(a))
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    j += 1
                    inversions += mid - i
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k : k + (mid - i)] = a[i:mid]
            k += mid - i
            buf[k : k + (hi - j)] = a[j:hi]
            a[lo:hi] = buf[lo:hi]
        width *= 2
    return inversions


def pair_counts(x: Sequence[float], y: Sequence[float]) -> PairCounts:
    """Count concordant/discordant/tied pairs over aligned observations."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise ValueError("need at least two observations")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)

    order = np.lexsort((ya, xa))
    xs, ys = xa[order], ya[order]

    total = n * (n - 1) // 2
    tied_x_all = _tie_pairs(_run_boundaries(xs))
    tied_both = _tie_pairs(_run_boundaries(xs) | _run_boundaries(ys))
    tied_y_all = _tie_pairs(_run_boundaries(np.sort(ya)))
    # Within x-tie groups y is sorted ascending, so strict y-inversions count
    # exactly the discordant pairs.
    discordant = _count_inversions(ys.tolist())
    concordant = total - tied_x_all - tied_y_all + tied_both - discordant

    return PairCounts(
        concordant=concordant,
        discordant=discordant,
        tied_x_only=tied_x_all - tied_both,
        tied_y_only=tied_y_all - tied_both,
        tied_both=tied_both,
        n=n,
        distinct_x=int(np.unique(xa).size),
        distinct_y=int(np.unique(ya).size),
    )


def tau_b(counts: PairCounts) -> float:
    """Kendall's tau-b: tie-corrected in both variables."""
    c, d = counts.concordant, counts.discordant
    not_tied_y = c + d + counts.tied_x_only
    not_tied_x = c + d + counts.tied_y_only
    if not_tied_x == 0 or not_tied_y == 0:
        raise UndefinedStatisticError("tau-b undefined: one variable is entirely tied")
    return (c - d) / math.sqrt(not_tied_y * not_tied_x)


def tau_c(counts: PairCounts) -> float:
    """Stuart's tau-c with m = min(distinct value counts)."""
    m = min(counts.distinct_x, counts.distinct_y)
    if m < 2:
        raise UndefinedStatisticError("tau-c undefined: fewer than two distinct values")
    return 2.0 * m * (counts.concordant - counts.discordant) / (counts.n**2 * (m - 1))


@dataclass(frozen=True)
class PairwiseAccuracy:
    """Per-category preference accuracies plus their unweighted average."""

    per_category: dict[str, float]
    average: float
    correct: int
    total: int


def pairwise_accuracy(
    items: Sequence["PairwiseItem"], scores: Sequence[tuple[float, float]]
) -> PairwiseAccuracy:
    """Fraction of pairs where the metric strictly prefers the human-chosen caption.

    Ties count as incorrect.  Accuracies are reported per category and averaged
    (unweighted) over the categories present.
    """
    if len(items) != len(scores):
        raise ValueError(f"length mismatch: {len(items)} items vs {len(scores)} score pairs")
    if not items:
        raise ValueError("need at least one item")
    hits: dict[str, int] = {}
    totals: dict[str, int] = {}
    for item, (score_a, score_b) in zip(items, scores):
        if item.category not in PAIRWISE_CATEGORIES:
            raise ValueError(f"unknown category {item.category!r}")
        chosen, other = (score_a, score_b) if item.winner == "a" else (score_b, score_a)
        totals[item.category] = totals.get(item.category, 0) + 1
        hits[item.category] = hits.get(item.category, 0) + (1 if chosen > other else 0)
    per_category = {cat: hits[cat] / totals[cat] for cat in PAIRWISE_CATEGORIES if cat in totals}
    average = sum(per_category.values()) / len(per_category)
    return PairwiseAccuracy(
        per_category=per_category,
        average=average,
        correct=sum(hits.values()),
        total=sum(totals.values()),
    )


def foil_accuracy(items: Sequence["FoilItem"], scores: Sequence[tuple[float, float]]) -> float:
    """Fraction of caption pairs where the intact caption strictly outscores the perturbed one."""
    if len(items) != len(scores):
        raise ValueError(f"length mismatch: {len(items)} items vs {len(scores)} score pairs")
    if not items:
        raise ValueError("need at least one item")
    wins = sum(1 for true_score, foil_score in scores if true_score > foil_score)
    return wins / len(items)
