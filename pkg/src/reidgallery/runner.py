"""Experiment orchestration and report formats.

One experiment = one JSON config: a manifest, one embedding file per model
variant, a gallery policy and a distance metric. Running it walks the recording
days in order, queries each planned query day against the current gallery
snapshot and produces one :class:`ExperimentReport` per variant.

Each report is written three ways: a rounded CSV and Markdown table laid out
like the per-day results tables (query set, mAP, Rank-k, then max/min/mean/std
rows) and a full-precision JSON sidecar that also logs the gallery and query
image ids of every step.
"""

from __future__ import annotations

import json
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .embedstore import DistanceMetric, EmbeddingMatrix, batch_search, load_embeddings
from .gallery import (
    Cumulative,
    Fixed,
    GalleryPolicy,
    GalleryState,
    Rolling,
    advance,
    check_binding,
    plan_schedule,
    policy_from_dict,
)
from .manifest import ImageRecord, RecordingSchedule, read_manifest
from .metrics import MapMode, MetricRow, SummaryStats

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
STD_CONVENTION = "population"


class ConfigError(ValueError):
    pass


class ContractError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment_name: str
    manifest_path: Path
    embeddings: dict[str, Path]
    policy: GalleryPolicy
    metric: DistanceMetric = DistanceMetric.COSINE
    ranks: tuple[int, ...] = metrics.DEFAULT_RANKS
    map_mode: MapMode = MapMode.MICRO
    output_dir: Path = Path("reports")
    seed: int | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.experiment_name:
            raise ConfigError("experiment_name must be nonempty")
        if not self.embeddings:
            raise ConfigError("at least one embedding variant is required")
        ranks = tuple(sorted({int(k) for k in self.ranks}))
        if not ranks or ranks[0] < 1:
            raise ConfigError("ranks must be a nonempty set of positive integers")
        self.ranks = ranks
        self.metric = DistanceMetric.parse(self.metric)
        self.map_mode = MapMode.parse(self.map_mode)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | str = ".") -> "ExperimentConfig":
        base = Path(base_dir)
        try:
            embeddings = data["embeddings"]
            if isinstance(embeddings, str):
                embeddings = {"default": embeddings}
            return cls(
                experiment_name=str(data["experiment_name"]),
                manifest_path=base / data["manifest"],
                embeddings={str(k): base / v for k, v in embeddings.items()},
                policy=policy_from_dict(data["policy"]),
                metric=data.get("metric", "cosine"),
                ranks=tuple(data.get("ranks", metrics.DEFAULT_RANKS)),
                map_mode=data.get("map_mode", "micro"),
                output_dir=base / data.get("output_dir", "reports"),
                seed=data.get("seed"),
                workers=int(data.get("workers", 1)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_dict(data, path.parent)


# The three gallery setups; T02 is the n+1 scheme.
PRESET_POLICIES: dict[str, GalleryPolicy] = {
    "t00": Fixed({1, 2}),
    "t01": Cumulative(1),
    "t02": Rolling(1),
}


def preset_config(
    name: str,
    manifest: str,
    embeddings: dict[str, str],
    output_dir: str = "reports",
    seed: int | None = None,
) -> dict:
    cfg = {
        "experiment_name": name.upper(),
        "manifest": manifest,
        "embeddings": dict(embeddings),
        "policy": PRESET_POLICIES[name.lower()].to_dict(),
        "metric": "cosine",
        "ranks": list(metrics.DEFAULT_RANKS),
        "map_mode": "micro",
        "output_dir": output_dir,
    }
    if seed is not None:
        cfg["seed"] = seed
    return cfg


@dataclass
class StepLog:
    query_day: int
    gallery_days: tuple[int, ...]
    query_image_ids: list[str]
    gallery_image_ids: list[str]
    seconds: float = 0.0


@dataclass
class ExperimentReport:
    experiment_name: str
    variant: str
    policy: str
    metric: str
    map_mode: str
    ranks: tuple[int, ...]
    rows: list[MetricRow]
    summary: dict[str, SummaryStats]
    seed: int | None = None
    steps: list[StepLog] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return ["map"] + metrics.rank_columns(self.ranks)

    @property
    def key(self) -> str:
        return f"{self.experiment_name}/{self.variant}"

    def means(self) -> dict[str, float]:
        return {col: self.summary[col].mean for col in self.columns}


def _group_by_day(records: Sequence[ImageRecord]) -> dict[int, list[ImageRecord]]:
    by_day: dict[int, list[ImageRecord]] = defaultdict(list)
    for r in records:
        by_day[r.day_index].append(r)
    return by_day


def evaluate(
    records: Sequence[ImageRecord],
    schedule: RecordingSchedule,
    matrix: EmbeddingMatrix,
    policy: GalleryPolicy,
    *,
    metric=DistanceMetric.COSINE,
    ranks: Sequence[int] = metrics.DEFAULT_RANKS,
    map_mode=MapMode.MICRO,
    workers: int = 1,
) -> tuple[list[MetricRow], list[StepLog]]:
    """Step ``policy`` through ``schedule`` and score every planned query day."""
    check_binding(records, matrix)
    ranks = tuple(sorted(set(ranks)))
    steps = {s.query_day: s for s in plan_schedule(policy, schedule)}
    by_day = _group_by_day(records)
    entity_of_row = np.full(matrix.count, -1, dtype=np.int64)
    for r in records:
        entity_of_row[r.row_index] = r.entity_id

    rows: list[MetricRow] = []
    logs: list[StepLog] = []
    state = GalleryState()
    for day in range(1, len(schedule) + 1):
        day_records = by_day.get(day, [])
        step = steps.get(day)
        if step is not None:
            if state.enrolled_days != tuple(sorted(step.gallery_days)):
                raise ContractError(
                    f"gallery lifecycle diverged from plan on day {day}: "
                    f"{state.enrolled_days} != {step.gallery_days}"
                )
            if not day_records:
                logger.warning("query day %d (%s) has no images; skipped", day, schedule.label_of(day))
            else:
                row, log = _evaluate_step(
                    day, day_records, state, matrix, entity_of_row, schedule,
                    metric, ranks, map_mode, workers,
                )
                rows.append(row)
                logs.append(log)
        state = advance(state, policy, day_records, day)
    return rows, logs


def _evaluate_step(day, queries, state, matrix, entity_of_row, schedule, metric, ranks, map_mode, workers):
    t0 = time.perf_counter()
    query_ids = [r.image_id for r in queries]
    gallery_ids = state.image_ids
    if set(query_ids) & set(gallery_ids):
        raise ContractError(f"query images of day {day} leaked into the gallery")
    if not gallery_ids:
        raise ContractError(f"gallery is empty when querying day {day}")
    results = batch_search(
        matrix,
        state.row_indices,
        [matrix.data[r.row_index] for r in queries],
        None,
        metric,
        query_ids=query_ids,
        workers=workers,
    )
    judgments = metrics.judgments_from_rankings(
        query_ids, [r.entity_id for r in queries], [res.rows for res in results], entity_of_row
    )
    excluded = sum(1 for j in judgments if not j.has_positive)
    row = MetricRow(
        query_day=day,
        map=metrics.mean_average_precision(judgments, map_mode),
        rank_acc=metrics.cmc(judgments, ranks),
        day_label=schedule.label_of(day),
        num_queries=len(judgments),
        excluded=excluded,
        extra={"gallery_size": len(gallery_ids), "gallery_days": list(state.enrolled_days)},
    )
    metrics.check_row(row)
    log = StepLog(day, state.enrolled_days, query_ids, gallery_ids, time.perf_counter() - t0)
    return row, log


def run_experiment(
    config: ExperimentConfig,
    variant: str,
    *,
    records: Sequence[ImageRecord] | None = None,
    schedule: RecordingSchedule | None = None,
    matrix: EmbeddingMatrix | None = None,
) -> ExperimentReport:
    if variant not in config.embeddings:
        raise ConfigError(
            f"variant {variant!r} not in config (have {sorted(config.embeddings)})"
        )
    if records is None or schedule is None:
        records, schedule = read_manifest(config.manifest_path)
    if matrix is None:
        matrix = load_embeddings(config.embeddings[variant])
    rows, logs = evaluate(
        records,
        schedule,
        matrix,
        config.policy,
        metric=config.metric,
        ranks=config.ranks,
        map_mode=config.map_mode,
        workers=config.workers,
    )
    if not rows:
        raise ContractError("experiment produced no query days")
    return ExperimentReport(
        experiment_name=config.experiment_name,
        variant=variant,
        policy=config.policy.describe(),
        metric=config.metric.value,
        map_mode=config.map_mode.value,
        ranks=config.ranks,
        rows=rows,
        summary=metrics.summarize_rows(rows, config.ranks),
        seed=config.seed,
        steps=logs,
    )


# -- report emission -------------------------------------------------------

def _header_fields(report: ExperimentReport) -> str:
    seed = "none" if report.seed is None else str(report.seed)
    return (
        f"reidgallery-report format={REPORT_FORMAT_VERSION} "
        f"experiment={report.experiment_name} variant={report.variant} "
        f"policy={report.policy} metric={report.metric} map_mode={report.map_mode} "
        f"std={STD_CONVENTION} seed={seed}"
    )


def _table(report: ExperimentReport) -> list[list[str]]:
    body = []
    for row in report.rows:
        body.append([row.day_label or f"{row.query_day:02d}"]
                    + [metrics.round2(v) for v in metrics.row_values(row, report.ranks)])
    for stat in ("max", "min", "mean", "std"):
        body.append([stat] + [metrics.round2(getattr(report.summary[c], stat)) for c in report.columns])
    return body


def emit_report(report: ExperimentReport, fmt: str = "csv") -> str:
    fmt = fmt.lower()
    body = _table(report)
    if fmt == "csv":
        lines = ["# " + _header_fields(report), ",".join(["query_day"] + report.columns)]
        lines += [",".join(cells) for cells in body]
        return "\n".join(lines) + "\n"
    if fmt in ("md", "markdown"):
        titles = ["Query Set", "mAP"] + [f"Rank-{k}" for k in report.ranks]
        lines = [
            f"<!-- {_header_fields(report)} -->",
            "| " + " | ".join(titles) + " |",
            "|" + "|".join("---:" for _ in titles) + "|",
        ]
        n_data = len(report.rows)
        for i, cells in enumerate(body):
            label = cells[0] if i < n_data else f"*{cells[0]}*"
            lines.append("| " + " | ".join([label] + cells[1:]) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "format": REPORT_FORMAT_VERSION,
        "experiment_name": report.experiment_name,
        "variant": report.variant,
        "policy": report.policy,
        "metric": report.metric,
        "map_mode": report.map_mode,
        "std": STD_CONVENTION,
        "seed": report.seed,
        "ranks": list(report.ranks),
        "rows": [
            {
                "query_day": r.query_day,
                "day_label": r.day_label,
                "map": r.map,
                "rank": {str(k): r.rank_acc[k] for k in report.ranks},
                "num_queries": r.num_queries,
                "excluded_no_positive": r.excluded,
                "gallery_size": r.extra.get("gallery_size"),
                "gallery_days": r.extra.get("gallery_days"),
            }
            for r in report.rows
        ],
        "summary": {
            col: {"max": s.max, "min": s.min, "mean": s.mean, "std": s.std}
            for col, s in report.summary.items()
        },
        "steps": [
            {
                "query_day": s.query_day,
                "gallery_days": list(s.gallery_days),
                "query_image_ids": s.query_image_ids,
                "gallery_image_ids": s.gallery_image_ids,
            }
            for s in report.steps
        ],
    }


def report_from_dict(data: dict) -> ExperimentReport:
    ranks = tuple(int(k) for k in data["ranks"])
    rows = [
        MetricRow(
            query_day=r["query_day"],
            map=r["map"],
            rank_acc={int(k): v for k, v in r["rank"].items()},
            day_label=r.get("day_label", ""),
            num_queries=r.get("num_queries", 0),
            excluded=r.get("excluded_no_positive", 0),
            extra={"gallery_size": r.get("gallery_size"), "gallery_days": r.get("gallery_days")},
        )
        for r in data["rows"]
    ]
    return ExperimentReport(
        experiment_name=data["experiment_name"],
        variant=data["variant"],
        policy=data["policy"],
        metric=data["metric"],
        map_mode=data["map_mode"],
        ranks=ranks,
        rows=rows,
        summary={c: SummaryStats(**s) for c, s in data["summary"].items()},
        seed=data.get("seed"),
        steps=[
            StepLog(s["query_day"], tuple(s["gallery_days"]), s["query_image_ids"], s["gallery_image_ids"])
            for s in data.get("steps", [])
        ],
    )


def report_stem(report: ExperimentReport) -> str:
    return f"{report.experiment_name.lower()}_{report.variant}"


def write_report(report: ExperimentReport, output_dir, *, timings: bool = False) -> dict[str, Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report_stem(report)
    paths = {
        "csv": out / f"{stem}.csv",
        "md": out / f"{stem}.md",
        "json": out / f"{stem}.json",
    }
    paths["csv"].write_text(emit_report(report, "csv"), encoding="utf-8")
    paths["md"].write_text(emit_report(report, "md"), encoding="utf-8")
    paths["json"].write_text(
        json.dumps(report_to_dict(report), indent=1) + "\n", encoding="utf-8"
    )
    if timings:
        # wall clock varies run to run, so it stays out of the reproducible files
        paths["timing"] = out / f"{stem}.timing.json"
        timing = [
            {
                "query_day": s.query_day,
                "gallery_size": len(s.gallery_image_ids),
                "num_queries": len(s.query_image_ids),
                "seconds": s.seconds,
            }
            for s in report.steps
        ]
        paths["timing"].write_text(json.dumps(timing, indent=1) + "\n", encoding="utf-8")
    return paths


def _parse_header(line: str) -> dict[str, str]:
    fields = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            k, v = token.split("=", 1)
            fields[k] = v
    return fields


def load_report(path) -> ExperimentReport:
    """Load a report, preferring the full-precision JSON sidecar of a CSV."""
    path = Path(path)
    if path.suffix == ".json":
        return report_from_dict(json.loads(path.read_text(encoding="utf-8")))
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        return report_from_dict(json.loads(sidecar.read_text(encoding="utf-8")))
    logger.warning("%s has no JSON sidecar; using rounded CSV values", path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing report header comment")
    head = _parse_header(lines[0])
    columns = lines[1].split(",")
    ranks = tuple(int(c[len("rank"):]) for c in columns[2:])
    rows, stats = [], {}
    for n, line in enumerate(lines[2:]):
        cells = line.split(",")
        vals = [float(x) for x in cells[1:]]
        if cells[0] in ("max", "min", "mean", "std"):
            stats[cells[0]] = vals
        else:
            rows.append(MetricRow(n + 1, vals[0], dict(zip(ranks, vals[1:])), day_label=cells[0]))
    summary = {
        col: SummaryStats(stats["max"][i], stats["min"][i], stats["mean"][i], stats["std"][i])
        for i, col in enumerate(columns[1:])
    }
    seed = head.get("seed")
    return ExperimentReport(
        experiment_name=head.get("experiment", path.stem),
        variant=head.get("variant", ""),
        policy=head.get("policy", ""),
        metric=head.get("metric", ""),
        map_mode=head.get("map_mode", ""),
        ranks=ranks,
        rows=rows,
        summary=summary,
        seed=None if seed in (None, "none") else int(seed),
    )


# -- comparison ------------------------------------------------------------

@dataclass
class ComparisonReport:
    labels: list[str]
    columns: list[str]
    means: dict[str, dict[str, float]]
    deltas: dict[tuple[str, str], dict[str, float]]

    def delta(self, a: str, b: str, column: str) -> float:
        return self.deltas[(a, b)][column]


def compare_runs(reports: Sequence[ExperimentReport]) -> ComparisonReport:
    if len(reports) < 2:
        raise ContractError("compare_runs needs at least two reports")
    ranks = reports[0].ranks
    for r in reports[1:]:
        if r.ranks != ranks:
            raise ContractError(f"rank sets differ: {ranks} vs {r.ranks}")
    labels: list[str] = []
    for r in reports:
        label, n = r.key, 2
        while label in labels:
            label = f"{r.key}#{n}"
            n += 1
        labels.append(label)
    columns = reports[0].columns
    means = {label: r.means() for label, r in zip(labels, reports)}
    deltas = {
        (a, b): {c: means[a][c] - means[b][c] for c in columns}
        for a in labels
        for b in labels
        if a != b
    }
    return ComparisonReport(labels, columns, means, deltas)


def emit_comparison(cmp: ComparisonReport) -> str:
    lines = [
        f"# reidgallery-comparison format={REPORT_FORMAT_VERSION} std={STD_CONVENTION} "
        "delta=mean(a)-mean(b)",
        ",".join(["kind", "a", "b"] + cmp.columns),
    ]
    for label in cmp.labels:
        lines.append(",".join(["mean", label, ""] + [repr(cmp.means[label][c]) for c in cmp.columns]))
    for (a, b), row in cmp.deltas.items():
        lines.append(",".join(["delta", a, b] + [repr(row[c]) for c in cmp.columns]))
    return "\n".join(lines) + "\n"


def parse_comparison(text: str) -> ComparisonReport:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    columns = lines[0].split(",")[3:]
    labels, means, deltas = [], {}, {}
    for line in lines[1:]:
        kind, a, b, *vals = line.split(",")
        row = dict(zip(columns, (float(v) for v in vals)))
        if kind == "mean":
            labels.append(a)
            means[a] = row
        else:
            deltas[(a, b)] = row
    return ComparisonReport(labels, columns, means, deltas)
