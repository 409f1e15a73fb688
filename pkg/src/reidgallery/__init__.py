"""Time-evolving re-identification galleries: policies, exact search and metrics."""

from .driftsim import DriftConfig, Variant, generate
from .embedstore import (
    DistanceMetric,
    EmbeddingMatrix,
    RankedResult,
    batch_search,
    load_embeddings,
    save_embeddings,
    search_full,
    search_topk,
)
from .gallery import Cumulative, Fixed, Rolling, advance, build_gallery, plan_schedule
from .manifest import ImageRecord, Perspective, RecordingSchedule, parse_manifest
from .metrics import average_precision, cmc, mean_average_precision, summarize
from .runner import compare_runs, emit_report, run_experiment

__version__ = "0.1.0"
