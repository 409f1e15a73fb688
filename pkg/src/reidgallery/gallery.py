"""Gallery update policies over a sequence of recording days.

A policy decides which recording days are enrolled in the gallery when a given
day is used as the query set:

* ``Fixed(days)``: a frozen set of days, never updated (setup T00 = days 1, 2).
* ``Cumulative(start_day)``: every day from ``start_day`` up to the day before the
  query (T01).
* ``Rolling(window)``: only the ``window`` most recent days (T02 = window 1).

Days are enrolled and evicted whole, never image by image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .embedstore import EmbeddingMatrix
from .manifest import ImageRecord, RecordingSchedule


class PolicyError(ValueError):
    """A policy or schedule violates its contract."""


class BindingError(ValueError):
    """A manifest record does not resolve to a row in the embedding matrix."""


@dataclass(frozen=True)
class Fixed:
    days: frozenset[int]

    def __init__(self, days: Iterable[int]):
        days = frozenset(int(d) for d in days)
        if not days:
            raise PolicyError("Fixed policy needs at least one gallery day")
        if min(days) < 1:
            raise PolicyError("day indices are 1-based")
        object.__setattr__(self, "days", days)

    def gallery_days(self, query_day: int) -> tuple[int, ...]:
        return tuple(sorted(self.days))

    def first_query_day(self) -> int:
        return max(self.days) + 1

    def enrolls(self, day: int) -> bool:
        return day in self.days

    def describe(self) -> str:
        return "fixed(days=" + "+".join(str(d) for d in sorted(self.days)) + ")"

    def to_dict(self) -> dict:
        return {"kind": "fixed", "days": sorted(self.days)}


@dataclass(frozen=True)
class Cumulative:
    start_day: int = 1

    def __post_init__(self):
        if self.start_day < 1:
            raise PolicyError("day indices are 1-based")

    def gallery_days(self, query_day: int) -> tuple[int, ...]:
        return tuple(range(self.start_day, query_day))

    def first_query_day(self) -> int:
        return self.start_day + 1

    def enrolls(self, day: int) -> bool:
        return day >= self.start_day

    def describe(self) -> str:
        return f"cumulative(start={self.start_day})"

    def to_dict(self) -> dict:
        return {"kind": "cumulative", "start_day": self.start_day}


@dataclass(frozen=True)
class Rolling:
    window: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise PolicyError("rolling window must be >= 1")

    def gallery_days(self, query_day: int) -> tuple[int, ...]:
        return tuple(range(max(1, query_day - self.window), query_day))

    def first_query_day(self) -> int:
        return 2

    def enrolls(self, day: int) -> bool:
        return True

    def describe(self) -> str:
        return f"rolling(window={self.window})"

    def to_dict(self) -> dict:
        return {"kind": "rolling", "window": self.window}


GalleryPolicy = Union[Fixed, Cumulative, Rolling]


def policy_from_dict(spec: dict) -> GalleryPolicy:
    kind = str(spec.get("kind", "")).lower()
    if kind == "fixed":
        return Fixed(spec["days"])
    if kind == "cumulative":
        return Cumulative(int(spec.get("start_day", 1)))
    if kind == "rolling":
        return Rolling(int(spec.get("window", 1)))
    raise PolicyError(f"unknown policy kind {spec.get('kind')!r}")


@dataclass(frozen=True)
class ExperimentStep:
    gallery_days: tuple[int, ...]
    query_day: int

    def __post_init__(self):
        if not self.gallery_days:
            raise PolicyError("a step needs at least one gallery day")
        if self.query_day in self.gallery_days:
            raise PolicyError(f"query day {self.query_day} is also a gallery day")


@dataclass(frozen=True)
class GalleryRow:
    image_id: str
    row_index: int
    entity_id: int
    day_index: int

    @classmethod
    def of(cls, record: ImageRecord) -> "GalleryRow":
        return cls(record.image_id, record.row_index, record.entity_id, record.day_index)


@dataclass(frozen=True)
class GalleryState:
    """Enrolled days and their image rows after all days up to ``horizon`` were seen."""

    enrolled_days: tuple[int, ...] = ()
    rows: tuple[GalleryRow, ...] = ()
    horizon: int = 0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def row_indices(self) -> list[int]:
        return [r.row_index for r in self.rows]

    @property
    def image_ids(self) -> list[str]:
        return [r.image_id for r in self.rows]


def plan_schedule(policy: GalleryPolicy, schedule: RecordingSchedule | int) -> list[ExperimentStep]:
    last = schedule if isinstance(schedule, int) else len(schedule)
    if last < 2:
        raise PolicyError("a schedule needs at least two recording days")
    if isinstance(policy, Fixed) and max(policy.days) >= last:
        raise PolicyError(
            f"fixed gallery days {sorted(policy.days)} leave no query day in a {last}-day schedule"
        )
    if isinstance(policy, Cumulative) and policy.start_day >= last:
        raise PolicyError(f"cumulative start day {policy.start_day} leaves no query day")
    return [
        ExperimentStep(policy.gallery_days(q), q)
        for q in range(policy.first_query_day(), last + 1)
    ]


def _rows_for(records: Sequence[ImageRecord], days: Iterable[int]) -> tuple[GalleryRow, ...]:
    rows = []
    for day in days:
        rows.extend(GalleryRow.of(r) for r in records if r.day_index == day)
    return tuple(rows)


def check_binding(records: Iterable[ImageRecord], embeddings: EmbeddingMatrix) -> None:
    for r in records:
        if r.row_index >= embeddings.count:
            raise BindingError(
                f"{r.image_id}: row_index {r.row_index} beyond embedding count {embeddings.count}"
            )
        if embeddings.row_ids[r.row_index] != r.image_id:
            raise BindingError(
                f"{r.image_id}: embedding row {r.row_index} is labeled "
                f"{embeddings.row_ids[r.row_index]!r}"
            )


def build_gallery(
    records: Sequence[ImageRecord], embeddings: EmbeddingMatrix, step: ExperimentStep
) -> GalleryState:
    days = tuple(sorted(step.gallery_days))
    wanted = set(days)
    check_binding((r for r in records if r.day_index in wanted), embeddings)
    return GalleryState(days, _rows_for(records, days), step.query_day - 1)


def advance(
    state: GalleryState,
    policy: GalleryPolicy,
    new_day_records: Sequence[ImageRecord],
    day_index: int | None = None,
) -> GalleryState:
    """Return the state after recording day ``day_index`` has been observed.

    ``day_index`` defaults to the day of ``new_day_records`` and is needed only
    when that day has no images.
    """
    if day_index is None:
        if not new_day_records:
            raise PolicyError("day_index is required when the new day has no records")
        day_index = new_day_records[0].day_index
    if any(r.day_index != day_index for r in new_day_records):
        raise PolicyError("new_day_records span more than one recording day")
    if day_index <= state.horizon:
        raise PolicyError(f"day {day_index} is not after the last observed day {state.horizon}")

    days = list(state.enrolled_days)
    rows = list(state.rows)
    if policy.enrolls(day_index):
        days.append(day_index)
        rows.extend(GalleryRow.of(r) for r in new_day_records)
    if isinstance(policy, Rolling):
        keep_from = day_index + 1 - policy.window
        days = [d for d in days if d >= keep_from]
        rows = [r for r in rows if r.day_index >= keep_from]
    return GalleryState(tuple(days), tuple(rows), day_index)
