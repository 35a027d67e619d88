"""Offline hyperparameter search over the post-processing pipeline.

Raw detector outputs are cached once in the toolkit's own schema; every
grid point then re-runs only the cheap post-processing and evaluation.
Within one sweep the ensemble fusion result is reused across grid points
sharing a merge strategy, and spatial qualities are memoized across grid
points producing identical detection geometry; neither cache changes any
value, so each row equals a direct pipeline-plus-evaluation run exactly.
"""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .core import Detection, Frame
from .fileio import (
    DetectionSequence,
    GroundTruthSequence,
    PathLike,
    SCHEMA_VERSION,
    SchemaError,
    align_detection_sources,
    atomic_write_text,
    dump_json,
    frame_sources,
    load_detections,
    read_json,
    save_detections,
)
from .heuristics import PipelineConfig, apply_post_merge
from .merge import MERGE_STRATEGIES, merge_ensemble
from .pdq import EvalSummary, evaluate_frame, summarize
from .validation import check_choice, check_non_negative, check_unit_interval


@dataclass(frozen=True)
class SweepGrid:
    """Value lists for the five swept pipeline axes."""

    thresholds: Tuple[float, ...] = (0.0,)
    box_ratios: Tuple[float, ...] = (0.0,)
    covariance_scales: Tuple[float, ...] = (0.0,)
    nms_ious: Tuple[float, ...] = (1.0,)
    strategies: Tuple[str, ...] = ("most_confident",)

    def __post_init__(self) -> None:
        for name in ("thresholds", "box_ratios", "covariance_scales", "nms_ious", "strategies"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ValueError(f"SweepGrid.{name} must be non-empty")
        for v in self.thresholds:
            check_unit_interval("thresholds", v)
        for v in self.box_ratios:
            check_unit_interval("box_ratios", v)
            if v >= 1.0:
                raise ValueError("box_ratios entries must be < 1")
        for v in self.covariance_scales:
            check_non_negative("covariance_scales", v)
        for v in self.nms_ious:
            check_unit_interval("nms_ious", v)
        for v in self.strategies:
            check_choice("strategies", v, MERGE_STRATEGIES)

    def __len__(self) -> int:
        return (len(self.thresholds) * len(self.box_ratios)
                * len(self.covariance_scales) * len(self.nms_ious)
                * len(self.strategies))

    def configs(self, base: PipelineConfig) -> List[PipelineConfig]:
        """All grid points as pipeline configs, in grid order.

        The strategy axis varies slowest, then threshold, box ratio,
        covariance scale, and NMS IoU.
        """
        out = []
        for strategy, t, ratio, scale, nms_iou in itertools.product(
            self.strategies, self.thresholds, self.box_ratios,
            self.covariance_scales, self.nms_ious,
        ):
            out.append(replace(
                base,
                confidence_threshold=t,
                box_reduction_ratio=ratio,
                covariance_scale=scale,
                final_nms_iou=nms_iou,
                merge=replace(base.merge, strategy=strategy),
            ))
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepGrid":
        known = {"thresholds", "box_ratios", "covariance_scales", "nms_ious", "strategies"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in doc.items()})


@dataclass(frozen=True)
class SweepResult:
    """One row per grid point, plus the index of the best row."""

    rows: Tuple[Tuple[PipelineConfig, EvalSummary], ...]
    best: int

    @property
    def best_row(self) -> Tuple[PipelineConfig, EvalSummary]:
        return self.rows[self.best]


def load_sweep_grid(path: PathLike) -> SweepGrid:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("grid file must be a JSON object", path=path)
    try:
        return SweepGrid.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid sweep grid: {exc}", path=path)


# ---------------------------------------------------------------------------
# Detection cache
# ---------------------------------------------------------------------------

_MANIFEST = "manifest.json"


@dataclass(frozen=True)
class DetectionCache:
    """Handle to a cache directory of normalized detection files."""

    directory: Path
    num_classes: int
    frame_meta: Tuple[Tuple[int, int, int], ...]
    source_files: Tuple[str, ...]

    @classmethod
    def open(cls, directory: PathLike) -> "DetectionCache":
        directory = Path(directory)
        manifest = read_json(directory / _MANIFEST)
        if not isinstance(manifest, dict):
            raise SchemaError("manifest must be a JSON object", path=directory / _MANIFEST)
        if manifest.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported cache schema_version {manifest.get('schema_version')!r}",
                path=directory / _MANIFEST, field="schema_version",
            )
        return cls(
            directory=directory,
            num_classes=int(manifest["num_classes"]),
            frame_meta=tuple((int(f), int(w), int(h)) for f, w, h in manifest["frames"]),
            source_files=tuple(str(s) for s in manifest["sources"]),
        )

    def load(self) -> List[DetectionSequence]:
        return [load_detections(self.directory / name) for name in self.source_files]


def cache_detections(source_paths: Sequence[PathLike], cache_dir: PathLike) -> DetectionCache:
    """Validate raw detection files and persist them once for sweeping."""
    if not source_paths:
        raise SchemaError("at least one detection file is required")
    sequences = [load_detections(p) for p in source_paths]
    meta = align_detection_sources(sequences)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, seq in enumerate(sequences):
        name = f"source_{i:03d}.json"
        save_detections(seq, cache_dir / name)
        names.append(name)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "num_classes": sequences[0].num_classes,
        "frames": [list(m) for m in meta],
        "sources": names,
    }
    atomic_write_text(cache_dir / _MANIFEST, dump_json(manifest))
    return DetectionCache.open(cache_dir)


# ---------------------------------------------------------------------------
# Sweep execution
# ---------------------------------------------------------------------------

def _evaluate_configs(
    configs: Sequence[PipelineConfig],
    sources_per_frame: Sequence[Sequence[Sequence[Detection]]],
    gt_frames: Sequence[Frame],
) -> List[EvalSummary]:
    """Evaluate grid points sequentially, reusing merge results and
    spatial qualities across points where they are identical."""
    merged_by_strategy: Dict[Tuple[str, float], List[List[Detection]]] = {}
    spatial_cache: Dict = {}
    summaries = []
    for config in configs:
        key = (config.merge.strategy, config.merge.lambda_iou)
        merged = merged_by_strategy.get(key)
        if merged is None:
            merged = [merge_ensemble(sources, config.merge) for sources in sources_per_frame]
            merged_by_strategy[key] = merged
        evaluations = []
        for gt_frame, merged_dets in zip(gt_frames, merged):
            dets = apply_post_merge(merged_dets, config)
            evaluations.append(evaluate_frame(gt_frame.with_detections(dets), spatial_cache))
        summaries.append(summarize(evaluations))
    return summaries


_WORKER_STATE: dict = {}


def _worker_init(sources_per_frame, gt_frames) -> None:
    _WORKER_STATE["sources"] = sources_per_frame
    _WORKER_STATE["gt_frames"] = gt_frames


def _worker_run(configs: Sequence[PipelineConfig]) -> List[EvalSummary]:
    return _evaluate_configs(configs, _WORKER_STATE["sources"], _WORKER_STATE["gt_frames"])


def run_sweep(
    cache: DetectionCache | Sequence[DetectionSequence],
    ground_truth: GroundTruthSequence,
    grid: SweepGrid,
    base: Optional[PipelineConfig] = None,
    workers: int = 1,
) -> SweepResult:
    """Evaluate every grid point against the cached detections.

    Rows come back in grid order and are identical for any worker count.
    Frame ids of the cache and the ground truth must agree; mismatches
    fail before anything is evaluated.
    """
    sequences = cache.load() if isinstance(cache, DetectionCache) else list(cache)
    meta = align_detection_sources(sequences)
    gt_meta = tuple((f.frame_id, f.image_width, f.image_height) for f in ground_truth.frames)
    if meta != gt_meta:
        raise SchemaError("cache and ground truth disagree on frame ids or image sizes")
    if sequences[0].num_classes != ground_truth.num_classes:
        raise SchemaError("cache and ground truth disagree on num_classes")

    if base is None:
        base = PipelineConfig(num_classes=ground_truth.num_classes)
    configs = grid.configs(base)
    sources_per_frame = frame_sources(sequences)
    gt_frames = ground_truth.frames

    if workers <= 1 or len(configs) <= 1:
        summaries = _evaluate_configs(configs, sources_per_frame, gt_frames)
    else:
        n_chunks = min(workers, len(configs))
        chunks = [configs[i::n_chunks] for i in range(n_chunks)]
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_worker_init,
            initargs=(sources_per_frame, gt_frames),
        ) as pool:
            chunk_results = list(pool.map(_worker_run, chunks))
        # Reassemble into grid order (chunk i holds configs i, i+n, ...).
        summaries = [None] * len(configs)  # type: ignore[list-item]
        for i, results in enumerate(chunk_results):
            for j, summary in enumerate(results):
                summaries[i + j * n_chunks] = summary

    rows = tuple(zip(configs, summaries))
    best = max(range(len(rows)), key=lambda k: (rows[k][1].pdq_score, -k))
    return SweepResult(rows=rows, best=best)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

REPORT_COLUMNS = (
    "threshold", "box_ratio", "covariance_scale", "nms_iou", "strategy",
    "PDQ Score", "Avg. pPDQ", "Avg. FP", "Avg. SQ", "Avg. LQ",
    "TPs", "FPs", "FNs", "pdq_raw", "best",
)


def _row_cells(config: PipelineConfig, summary: EvalSummary, is_best: bool) -> List[str]:
    return [
        repr(config.confidence_threshold),
        repr(config.box_reduction_ratio),
        repr(config.covariance_scale),
        repr(config.final_nms_iou),
        config.merge.strategy,
        f"{summary.pdq_score * 100.0:.3f}",
        f"{summary.avg_ppdq:.3f}",
        f"{summary.avg_fp_quality:.3f}",
        f"{summary.avg_spatial_q:.3f}",
        f"{summary.avg_label_q:.3f}",
        str(summary.total_tp),
        str(summary.total_fp),
        str(summary.total_fn),
        repr(summary.pdq_score),
        "*" if is_best else "",
    ]


def report(result: SweepResult, fmt: str = "csv") -> str:
    """Render sweep rows as CSV or an aligned text table.

    PDQ is shown as a percentage with three decimals, matching the usual
    table convention; the raw [0, 1] score is kept in ``pdq_raw``.
    """
    check_choice("fmt", fmt, ("csv", "text"))
    if not result.rows:
        raise ValueError("cannot report an empty sweep result")
    table = [
        _row_cells(config, summary, i == result.best)
        for i, (config, summary) in enumerate(result.rows)
    ]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(table)
        return buf.getvalue()
    widths = [
        max(len(REPORT_COLUMNS[c]), max(len(row[c]) for row in table))
        for c in range(len(REPORT_COLUMNS))
    ]
    lines = ["  ".join(name.ljust(w) for name, w in zip(REPORT_COLUMNS, widths)).rstrip()]
    for row in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
