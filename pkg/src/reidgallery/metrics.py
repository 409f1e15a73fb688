"""Re-identification metrics: average precision, mAP, CMC/Rank-k and table summaries."""

from __future__ import annotations

import enum
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_RANKS = (1, 3, 5, 10)


class NoPositiveError(ValueError):
    """The query's entity does not occur anywhere in the ranking."""


class EvaluationError(ValueError):
    pass


class MapMode(str, enum.Enum):
    MICRO = "micro"  # mean over queries
    MACRO = "macro"  # mean over entities of per-entity mean AP

    @classmethod
    def parse(cls, value) -> "MapMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {
            "micro": cls.MICRO,
            "microperquery": cls.MICRO,
            "macro": cls.MACRO,
            "macroperentity": cls.MACRO,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown map mode {value!r}") from None


@dataclass(frozen=True)
class QueryJudgment:
    query_id: str
    query_entity: int
    ranked_entities: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "ranked_entities", np.asarray(self.ranked_entities).reshape(-1)
        )

    @property
    def matches(self) -> np.ndarray:
        return self.ranked_entities == self.query_entity

    @property
    def has_positive(self) -> bool:
        return bool(self.matches.any())

    def first_match_rank(self) -> int | None:
        hits = np.flatnonzero(self.matches)
        return int(hits[0]) + 1 if hits.size else None


@dataclass
class MetricRow:
    query_day: int
    map: float
    rank_acc: dict[int, float]
    day_label: str = ""
    num_queries: int = 0
    excluded: int = 0
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SummaryStats:
    max: float
    min: float
    mean: float
    std: float


def average_precision(j: QueryJudgment) -> float:
    matches = j.matches
    positives = int(matches.sum())
    if positives == 0:
        raise NoPositiveError(f"query {j.query_id!r}: entity {j.query_entity} not in gallery")
    ranks = np.flatnonzero(matches) + 1
    hits_so_far = np.arange(1, positives + 1)
    return float(np.sum(hits_so_far / ranks) / positives)


def mean_average_precision(
    judgments: Iterable[QueryJudgment], mode: MapMode | str = MapMode.MICRO
) -> float:
    """Mean AP; queries without any gallery positive are skipped with a warning."""
    mode = MapMode.parse(mode)
    per_query = []
    excluded = 0
    for j in judgments:
        try:
            per_query.append((j.query_entity, average_precision(j)))
        except NoPositiveError:
            excluded += 1
    if excluded:
        logger.warning("%d queries without gallery positives excluded from mAP", excluded)
    if not per_query:
        raise EvaluationError("no evaluable queries for mAP")
    if mode is MapMode.MICRO:
        return math.fsum(ap for _, ap in per_query) / len(per_query)
    by_entity: dict[int, list[float]] = defaultdict(list)
    for entity, ap in per_query:
        by_entity[entity].append(ap)
    entity_means = [math.fsum(v) / len(v) for _, v in sorted(by_entity.items())]
    return math.fsum(entity_means) / len(entity_means)


def cmc(judgments: Sequence[QueryJudgment], ks: Iterable[int] = DEFAULT_RANKS) -> dict[int, float]:
    """Fraction of queries whose first correct match is within the top k."""
    ks = sorted(set(ks))
    if not ks:
        raise ValueError("ks must be nonempty")
    if any(k < 1 for k in ks):
        raise ValueError("ranks must be positive")
    judgments = list(judgments)
    if not judgments:
        return {k: 0.0 for k in ks}
    first = [j.first_match_rank() for j in judgments]
    n = len(first)
    return {k: sum(1 for r in first if r is not None and r <= k) / n for k in ks}


def summarize(values: Sequence[float]) -> SummaryStats:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("cannot summarize an empty list")
    lo, hi = min(vals), max(vals)
    mean = min(max(math.fsum(vals) / len(vals), lo), hi)
    # population std (divide by N)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return SummaryStats(max=hi, min=lo, mean=mean, std=math.sqrt(var))


def round2(value: float) -> str:
    """Two-decimal rendering with round-half-even on the shortest decimal repr."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


def summarize_rows(rows: Sequence[MetricRow], ranks: Sequence[int]) -> dict[str, SummaryStats]:
    out = {"map": summarize([r.map for r in rows])}
    for k in ranks:
        out[f"rank{k}"] = summarize([r.rank_acc[k] for r in rows])
    return out


def rank_columns(ranks: Iterable[int]) -> list[str]:
    return [f"rank{k}" for k in ranks]


def row_values(row: MetricRow, ranks: Iterable[int]) -> list[float]:
    return [row.map] + [row.rank_acc[k] for k in ranks]


def check_row(row: MetricRow) -> None:
    ks = sorted(row.rank_acc)
    vals = [row.rank_acc[k] for k in ks]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise EvaluationError(f"rank accuracy not monotone on day {row.query_day}")
    if not (0.0 <= row.map <= 1.0) or any(not (0.0 <= v <= 1.0) for v in vals):
        raise EvaluationError(f"metric out of [0, 1] on day {row.query_day}")


def judgments_from_rankings(query_ids, query_entities, rankings, entity_of_row) -> list[QueryJudgment]:
    """Turn ranked matrix rows into judgments; ``entity_of_row`` maps row -> entity."""
    lookup = np.asarray(entity_of_row)
    return [
        QueryJudgment(qid, int(ent), lookup[np.asarray(rank_rows)])
        for qid, ent, rank_rows in zip(query_ids, query_entities, rankings)
    ]
