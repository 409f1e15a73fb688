"""Dataset labeling scheme and the manifest CSV that binds images to embedding rows.

Each image carries an entity id (one block face), a camera perspective, the
recording day it was captured on and a damage flag. Day labels keep their
textual form ("01", "14a") while ``day_index`` gives the 1-based position in the
recording schedule.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

MANIFEST_HEADER = (
    "image_id",
    "entity_id",
    "perspective",
    "day_label",
    "damaged",
    "row_index",
    "source_path",
)
_REQUIRED_COLUMNS = MANIFEST_HEADER[:-1]


class ManifestError(ValueError):
    """Raised when a manifest cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ManifestValidationError(ManifestError):
    """Raised when a manifest parses but violates a labeling invariant."""


class Perspective(str, enum.Enum):
    LEFT = "Left"
    CENTER = "Center"
    RIGHT = "Right"

    @classmethod
    def parse(cls, token: str) -> "Perspective":
        for member in cls:
            if member.value == token:
                return member
        raise ValueError(f"unknown perspective {token!r}")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    entity_id: int
    perspective: Perspective
    day_index: int
    day_label: str
    damaged: bool
    row_index: int
    source_path: str | None = None

    def __post_init__(self):
        if not self.image_id:
            raise ManifestValidationError("image_id must be nonempty")
        if self.entity_id < 0:
            raise ManifestValidationError(f"{self.image_id}: negative entity_id")
        if self.day_index < 1:
            raise ManifestValidationError(f"{self.image_id}: day_index must be >= 1")
        if not self.day_label:
            raise ManifestValidationError(f"{self.image_id}: empty day_label")
        if self.row_index < 0:
            raise ManifestValidationError(f"{self.image_id}: negative row_index")


@dataclass(frozen=True)
class RecordingSchedule:
    """Ordered recording days; ``day_index`` of a day is its position + 1."""

    days: tuple[tuple[str, bool], ...]

    def __post_init__(self):
        labels = [label for label, _ in self.days]
        if len(set(labels)) != len(labels):
            raise ManifestValidationError("duplicate day labels in schedule")
        if any(not label for label in labels):
            raise ManifestValidationError("empty day label in schedule")

    @classmethod
    def from_labels(cls, labels: Iterable[str], damage_labels: Iterable[str] = ()):
        damage = set(damage_labels)
        return cls(tuple((label, label in damage) for label in labels))

    def __len__(self) -> int:
        return len(self.days)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.days]

    def index_of(self, label: str) -> int:
        for i, (day_label, _) in enumerate(self.days):
            if day_label == label:
                return i + 1
        raise KeyError(label)

    def label_of(self, day_index: int) -> str:
        return self.days[day_index - 1][0]

    def is_damage_day(self, day_index: int) -> bool:
        return self.days[day_index - 1][1]


@dataclass(frozen=True)
class DatasetShape:
    num_entities: int
    perspectives_per_entity: int
    expected_total: int
    num_days: int | None = None

    def __post_init__(self):
        if self.num_entities < 1 or self.perspectives_per_entity < 1 or self.expected_total < 1:
            raise ValueError("dataset shape fields must be positive")
        if self.perspectives_per_entity > len(Perspective):
            raise ValueError(f"at most {len(Perspective)} perspectives are supported")
        if self.num_days is not None:
            capacity = self.num_entities * self.perspectives_per_entity * self.num_days
            if self.expected_total > capacity:
                raise ValueError(
                    f"expected_total {self.expected_total} exceeds capacity {capacity}"
                )

    @property
    def perspectives(self) -> tuple[Perspective, ...]:
        return tuple(Perspective)[: self.perspectives_per_entity]


# Nominal pallet-block-2696 layout: 60 ids, 3 views, 15 sessions incl. "14a".
REFERENCE_SHAPE = DatasetShape(
    num_entities=60, perspectives_per_entity=3, expected_total=2696, num_days=15
)


def _parse_bool(token: str) -> bool:
    if token == "true":
        return True
    if token == "false":
        return False
    raise ValueError(f"damaged must be 'true' or 'false', got {token!r}")


def parse_manifest(
    text: str, schedule: RecordingSchedule | None = None
) -> tuple[list[ImageRecord], RecordingSchedule]:
    """Parse manifest CSV text into records and a recording schedule.

    Without an explicit ``schedule`` the day order is the first-appearance
    order of ``day_label`` values and a day counts as a damage day when any of
    its records is flagged damaged. With one, every label must belong to it and
    damaged records may only sit on its damage days.
    """
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("empty manifest", line=1) from None
    if tuple(header) not in (MANIFEST_HEADER, _REQUIRED_COLUMNS):
        raise ManifestError(f"unexpected header {','.join(header)!r}", line=1)
    ncols = len(header)

    raw = []
    labels: list[str] = []
    seen_labels: set[str] = set()
    damage_labels: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != ncols:
            raise ManifestError(f"expected {ncols} fields, got {len(row)}", line=lineno)
        try:
            entity_id = int(row[1])
            damaged = _parse_bool(row[4])
            row_index = int(row[5])
        except ValueError as exc:
            raise ManifestError(str(exc), line=lineno) from None
        try:
            perspective = Perspective.parse(row[2])
        except ValueError as exc:
            raise ManifestValidationError(str(exc), line=lineno) from None
        label = row[3]
        if not label:
            raise ManifestError("empty day_label", line=lineno)
        source = row[6] if ncols == len(MANIFEST_HEADER) and row[6] else None
        if label not in seen_labels:
            seen_labels.add(label)
            labels.append(label)
        if damaged:
            damage_labels.add(label)
        raw.append((lineno, row[0], entity_id, perspective, label, damaged, row_index, source))

    if schedule is None:
        schedule = RecordingSchedule.from_labels(labels, damage_labels)

    records = []
    seen_ids: dict[str, int] = {}
    for lineno, image_id, entity_id, perspective, label, damaged, row_index, source in raw:
        if image_id in seen_ids:
            raise ManifestValidationError(
                f"duplicate image_id {image_id!r} (first on line {seen_ids[image_id]})",
                line=lineno,
            )
        seen_ids[image_id] = lineno
        try:
            day_index = schedule.index_of(label)
        except KeyError:
            raise ManifestValidationError(
                f"day_label {label!r} not in schedule", line=lineno
            ) from None
        if damaged and not schedule.is_damage_day(day_index):
            raise ManifestValidationError(
                f"damaged record on non-damage day {label!r}", line=lineno
            )
        try:
            records.append(
                ImageRecord(
                    image_id=image_id,
                    entity_id=entity_id,
                    perspective=perspective,
                    day_index=day_index,
                    day_label=label,
                    damaged=damaged,
                    row_index=row_index,
                    source_path=source,
                )
            )
        except ManifestValidationError as exc:
            raise ManifestValidationError(str(exc), line=lineno) from None
    return records, schedule


def emit_manifest(records: Iterable[ImageRecord]) -> str:
    out = io.StringIO(newline="")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for r in records:
        writer.writerow(
            [
                r.image_id,
                r.entity_id,
                r.perspective.value,
                r.day_label,
                "true" if r.damaged else "false",
                r.row_index,
                r.source_path or "",
            ]
        )
    return out.getvalue()


def read_manifest(path, schedule: RecordingSchedule | None = None):
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_manifest(fh.read(), schedule)


def write_manifest(path, records: Iterable[ImageRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(emit_manifest(records))


def select_day(records: Sequence[ImageRecord], day_index: int) -> list[ImageRecord]:
    return [r for r in records if r.day_index == day_index]


@dataclass
class DayCoverage:
    day_index: int
    day_label: str
    image_count: int
    entity_count: int
    perspectives_by_entity: dict[int, tuple[str, ...]]
    missing_pairs: list[tuple[int, str]]
    unexpected_entities: list[int] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing_pairs and not self.unexpected_entities


@dataclass
class ValidationReport:
    days: list[DayCoverage]
    total_images: int
    expected_total: int
    num_entities: int

    @property
    def total_deviation(self) -> int:
        return self.total_images - self.expected_total

    @property
    def total_matches(self) -> bool:
        return self.total_deviation == 0

    @property
    def missing_pairs(self) -> list[tuple[int, int, str]]:
        return [(d.day_index, e, p) for d in self.days for e, p in d.missing_pairs]

    def format(self) -> str:
        lines = [
            f"images={self.total_images} expected={self.expected_total} "
            f"deviation={self.total_deviation:+d} entities={self.num_entities} "
            f"days={len(self.days)}"
        ]
        for d in self.days:
            status = "complete" if d.complete else f"missing={len(d.missing_pairs)}"
            lines.append(
                f"day {d.day_index} ({d.day_label}): images={d.image_count} "
                f"entities={d.entity_count} {status}"
            )
            for entity, persp in d.missing_pairs:
                lines.append(f"  missing entity={entity} perspective={persp}")
            if d.unexpected_entities:
                lines.append(f"  unexpected entities={d.unexpected_entities}")
        return "\n".join(lines) + "\n"


def validate_dataset(records: Sequence[ImageRecord], shape: DatasetShape) -> ValidationReport:
    """Report per-day completeness against ``shape``; never raises on gaps."""
    by_day: dict[int, list[ImageRecord]] = defaultdict(list)
    for r in records:
        by_day[r.day_index].append(r)

    expected_views = [p.value for p in shape.perspectives]
    days = []
    for day_index in sorted(by_day):
        recs = by_day[day_index]
        coverage: dict[int, set[str]] = defaultdict(set)
        for r in recs:
            coverage[r.entity_id].add(r.perspective.value)
        missing = [
            (entity, view)
            for entity in range(shape.num_entities)
            for view in expected_views
            if view not in coverage.get(entity, ())
        ]
        days.append(
            DayCoverage(
                day_index=day_index,
                day_label=recs[0].day_label,
                image_count=len(recs),
                entity_count=len(coverage),
                perspectives_by_entity={
                    e: tuple(v for v in (p.value for p in Perspective) if v in views)
                    for e, views in sorted(coverage.items())
                },
                missing_pairs=missing,
                unexpected_entities=sorted(e for e in coverage if e >= shape.num_entities),
            )
        )
    return ValidationReport(
        days=days,
        total_images=len(records),
        expected_total=shape.expected_total,
        num_entities=len({r.entity_id for r in records}),
    )
