"""Canonical benchmark file formats and human-judgment flattening.

Datasets are UTF-8, line-delimited JSON records, one item per line.  The first
line must be a header record declaring the schema and, for judged datasets,
the statistic and judgment policy — the harness never guesses:

    {"record": "header", "dataset_id": "...", "schema": "judged",
     "statistic": "tau_c", "judgment_policy": "per_rating"}
    {"image_ref": "im1.jpg", "candidate": "A dog.", "references": ["A dog runs."],
     "human_ratings": [4, 4, 3], "scale": {"min": 1, "max": 4}}

Pairwise records carry caption_a/caption_b/category/winner; foil records carry
true_caption/foil_caption.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import DatasetError


class DatasetKind(str, enum.Enum):
    JUDGED = "judged"
    PAIRWISE = "pairwise"
    FOIL = "foil"


class Statistic(str, enum.Enum):
    TAU_B = "tau_b"
    TAU_C = "tau_c"
    PAIRWISE_ACCURACY = "pairwise_accuracy"
    FOIL_ACCURACY = "foil_accuracy"


class JudgmentPolicy(str, enum.Enum):
    """How per-item human ratings become observations for rank statistics."""

    PER_RATING = "per_rating"
    MEAN = "mean"
    PROPORTION = "proportion"


#: Statistics each schema may declare.
SCHEMA_STATISTICS = {
    DatasetKind.JUDGED: (Statistic.TAU_C, Statistic.TAU_B),
    DatasetKind.PAIRWISE: (Statistic.PAIRWISE_ACCURACY,),
    DatasetKind.FOIL: (Statistic.FOIL_ACCURACY,),
}


@dataclass(frozen=True)
class RatingScale:
    min: float
    max: float

    def __post_init__(self):
        if self.min >= self.max:
            raise ValueError(f"scale min {self.min} must be below max {self.max}")


@dataclass(frozen=True)
class JudgedCaption:
    """A candidate caption with human ratings on the dataset's native scale."""

    image_ref: str
    candidate: str
    human_ratings: tuple[float, ...]
    scale: RatingScale
    references: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.candidate:
            raise ValueError("candidate caption must be non-empty")
        for rating in self.human_ratings:
            if not self.scale.min <= rating <= self.scale.max:
                raise ValueError(
                    f"human_ratings entry {rating} outside scale [{self.scale.min}, {self.scale.max}]"
                )


@dataclass(frozen=True)
class PairwiseItem:
    """Two candidate captions for one image plus the human-preferred side."""

    image_ref: str
    caption_a: str
    caption_b: str
    category: str
    winner: str

    def __post_init__(self):
        if self.caption_a == self.caption_b:
            raise ValueError("caption_a and caption_b must differ")
        if self.category not in ("HC", "HI", "HM", "MM"):
            raise ValueError(f"category must be one of HC/HI/HM/MM, got {self.category!r}")
        if self.winner not in ("a", "b"):
            raise ValueError(f"winner must be 'a' or 'b', got {self.winner!r}")


@dataclass(frozen=True)
class FoilItem:
    """An intact caption and its perturbed twin (one object swapped)."""

    image_ref: str
    true_caption: str
    foil_caption: str

    def __post_init__(self):
        true_tokens = self.true_caption.split()
        foil_tokens = self.foil_caption.split()
        if true_tokens == foil_tokens:
            raise ValueError("true_caption and foil_caption must differ in at least one token")


@dataclass(frozen=True)
class DatasetDeclaration:
    """Header-record contents: what the file contains and how to evaluate it."""

    dataset_id: str
    kind: DatasetKind
    statistic: Statistic
    judgment_policy: JudgmentPolicy | None = None


@dataclass(frozen=True)
class LoadedDataset:
    declaration: DatasetDeclaration
    items: tuple[Any, ...]


def _parse_header(data: dict[str, Any], line: int) -> DatasetDeclaration:
    try:
        kind = DatasetKind(data["schema"])
    except KeyError:
        raise DatasetError("header record missing 'schema'", line=line) from None
    except ValueError:
        raise DatasetError(f"unknown schema {data['schema']!r}", line=line) from None
    allowed = SCHEMA_STATISTICS[kind]
    statistic_raw = data.get("statistic")
    if statistic_raw is None:
        if len(allowed) > 1:
            raise DatasetError(
                f"header must declare 'statistic' for schema {kind.value!r} "
                f"(one of {[s.value for s in allowed]})",
                line=line,
            )
        statistic = allowed[0]
    else:
        try:
            statistic = Statistic(statistic_raw)
        except ValueError:
            raise DatasetError(f"unknown statistic {statistic_raw!r}", line=line) from None
        if statistic not in allowed:
            raise DatasetError(
                f"statistic {statistic.value!r} not valid for schema {kind.value!r}", line=line
            )
    policy = None
    if kind is DatasetKind.JUDGED:
        policy_raw = data.get("judgment_policy", JudgmentPolicy.PER_RATING.value)
        try:
            policy = JudgmentPolicy(policy_raw)
        except ValueError:
            raise DatasetError(f"unknown judgment_policy {policy_raw!r}", line=line) from None
    return DatasetDeclaration(
        dataset_id=str(data.get("dataset_id", "unnamed")),
        kind=kind,
        statistic=statistic,
        judgment_policy=policy,
    )


def _require(data: dict[str, Any], field: str, line: int) -> Any:
    if field not in data:
        raise DatasetError(f"missing field {field!r}", line=line)
    return data[field]


def _parse_item(data: dict[str, Any], kind: DatasetKind, line: int):
    try:
        if kind is DatasetKind.JUDGED:
            scale_raw = _require(data, "scale", line)
            return JudgedCaption(
                image_ref=str(_require(data, "image_ref", line)),
                candidate=str(_require(data, "candidate", line)),
                references=tuple(str(r) for r in data.get("references", ())),
                human_ratings=tuple(float(r) for r in _require(data, "human_ratings", line)),
                scale=RatingScale(min=float(scale_raw["min"]), max=float(scale_raw["max"])),
            )
        if kind is DatasetKind.PAIRWISE:
            return PairwiseItem(
                image_ref=str(_require(data, "image_ref", line)),
                caption_a=str(_require(data, "caption_a", line)),
                caption_b=str(_require(data, "caption_b", line)),
                category=str(_require(data, "category", line)),
                winner=str(_require(data, "winner", line)),
            )
        return FoilItem(
            image_ref=str(_require(data, "image_ref", line)),
            true_caption=str(_require(data, "true_caption", line)),
            foil_caption=str(_require(data, "foil_caption", line)),
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise DatasetError(str(exc), line=line) from exc


def parse_dataset_text(text: str, kind: DatasetKind | None = None) -> LoadedDataset:
    """Parse line-delimited dataset records; errors carry 1-based line numbers."""
    declaration: DatasetDeclaration | None = None
    items: list[Any] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON: {exc.msg}", line=line_no) from exc
        if not isinstance(data, dict):
            raise DatasetError("record must be a JSON object", line=line_no)
        if data.get("record") == "header":
            if declaration is not None:
                raise DatasetError("duplicate header record", line=line_no)
            if items:
                raise DatasetError("header record must come first", line=line_no)
            declaration = _parse_header(data, line_no)
            continue
        if declaration is None:
            raise DatasetError(
                "first record must be a header declaring the schema "
                '(e.g. {"record": "header", "schema": "judged", "statistic": "tau_c"})',
                line=line_no,
            )
        items.append(_parse_item(data, declaration.kind, line_no))
    if declaration is None:
        raise DatasetError("dataset is empty: no header record found")
    if kind is not None and declaration.kind is not kind:
        raise DatasetError(
            f"expected a {kind.value!r} dataset but header declares {declaration.kind.value!r}"
        )
    return LoadedDataset(declaration=declaration, items=tuple(items))


def load_dataset(path: str | Path, kind: DatasetKind | None = None) -> LoadedDataset:
    """Load and validate a dataset file (see module docstring for the format)."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    return parse_dataset_text(path.read_text(encoding="utf-8"), kind=kind)


def flatten_judgments(
    records: list[JudgedCaption] | tuple[JudgedCaption, ...], policy: JudgmentPolicy
) -> tuple[list[float], list[int]]:
    """Turn per-item human ratings into rank-statistic observations.

    Returns (human values, aligned record indices); the caller repeats each
    record's metric score into the slots given by the indices.  PER_RATING
    emits one observation per individual rating, MEAN one per record, and
    PROPORTION the yes-fraction per record (binary ratings only).
    """
    xs: list[float] = []
    slots: list[int] = []
    for index, record in enumerate(records):
        if not record.human_ratings:
            raise DatasetError(f"item {index}: empty human_ratings")
        if policy is JudgmentPolicy.PER_RATING:
            for rating in record.human_ratings:
                xs.append(rating)
                slots.append(index)
        elif policy is JudgmentPolicy.MEAN:
            xs.append(sum(record.human_ratings) / len(record.human_ratings))
            slots.append(index)
        else:
            lo, hi = record.scale.min, record.scale.max
            if any(r not in (lo, hi) for r in record.human_ratings):
                raise DatasetError(
                    f"item {index}: proportion policy requires binary ratings in {{{lo}, {hi}}}"
                )
            xs.append(sum(1 for r in record.human_ratings if r == hi) / len(record.human_ratings))
            slots.append(index)
    return xs, slots
