"""Command-line interface.

Subcommands: ``evaluate``, ``merge``, ``pipeline``, ``cache``, ``sweep``.
Failures print a machine-readable JSON error to stderr and exit nonzero;
output files are written atomically, so a failed run never leaves a
partial file behind.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional, Sequence

from .core import Frame
from .fileio import (
    DetectionSequence,
    SchemaError,
    align_detection_sources,
    atomic_write_text,
    combine_with_ground_truth,
    frame_sources,
    load_detections,
    load_ground_truth,
    load_pipeline_config,
    save_detections,
)
from .heuristics import PipelineConfig, run_pipeline
from .merge import MERGE_STRATEGIES, MergeConfig, concat_detections, merge_ensemble
from .pdq import evaluate_sequence
from .sweep import DetectionCache, cache_detections, load_sweep_grid, report, run_sweep

AVG_FP_DEFINITION = "1-minus-max-label"


def _load_sources(paths: Sequence[str]) -> List[DetectionSequence]:
    sequences = [load_detections(p) for p in paths]
    align_detection_sources(sequences)
    return sequences


def _sequence_from_frames(num_classes, meta, dets_per_frame) -> DetectionSequence:
    frames = tuple(
        Frame(frame_id=f, image_width=w, image_height=h, detections=tuple(dets))
        for (f, w, h), dets in zip(meta, dets_per_frame)
    )
    return DetectionSequence(num_classes=num_classes, frames=frames)


def _cmd_evaluate(args) -> int:
    sequences = _load_sources(args.detections)
    gt = load_ground_truth(args.ground_truth)
    if sequences[0].num_classes != gt.num_classes:
        raise SchemaError(
            f"detections have {sequences[0].num_classes} classes but ground "
            f"truth has {gt.num_classes}"
        )
    meta = align_detection_sources(sequences)
    sources = frame_sources(sequences)
    if args.config is not None:
        config = load_pipeline_config(args.config)
        dets_per_frame = run_pipeline(sources, config)
    else:
        dets_per_frame = [concat_detections(s) for s in sources]
    frames = combine_with_ground_truth(gt, dets_per_frame, meta)
    summary = evaluate_sequence(frames)
    payload = {
        "schema_version": 1,
        "summary": summary.to_dict(),
        "definitions": {"avg_fp_quality": AVG_FP_DEFINITION},
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return 0


def _cmd_merge(args) -> int:
    sequences = _load_sources(args.detections)
    meta = align_detection_sources(sequences)
    config = MergeConfig(lambda_iou=args.lambda_iou, strategy=args.strategy)
    merged = [merge_ensemble(s, config) for s in frame_sources(sequences)]
    save_detections(_sequence_from_frames(sequences[0].num_classes, meta, merged), args.out)
    return 0


def _cmd_pipeline(args) -> int:
    sequences = _load_sources(args.detections)
    meta = align_detection_sources(sequences)
    config = load_pipeline_config(args.config)
    processed = run_pipeline(frame_sources(sequences), config)
    save_detections(_sequence_from_frames(sequences[0].num_classes, meta, processed), args.out)
    return 0


def _cmd_cache(args) -> int:
    cache = cache_detections(args.detections, args.out)
    sys.stdout.write(
        f"cached {len(cache.source_files)} source(s), "
        f"{len(cache.frame_meta)} frame(s) -> {cache.directory}\n"
    )
    return 0


def _cmd_sweep(args) -> int:
    cache = DetectionCache.open(args.cache)
    gt = load_ground_truth(args.ground_truth)
    grid = load_sweep_grid(args.grid)
    base = load_pipeline_config(args.config) if args.config else None
    result = run_sweep(cache, gt, grid, base=base, workers=args.workers)
    atomic_write_text(args.out, report(result, fmt="csv"))
    config, summary = result.best_row
    sys.stdout.write(
        f"swept {len(result.rows)} configuration(s); best row {result.best}: "
        f"threshold={config.confidence_threshold} "
        f"box_ratio={config.box_reduction_ratio} "
        f"covariance_scale={config.covariance_scale} "
        f"nms_iou={config.final_nms_iou} "
        f"strategy={config.merge.strategy} "
        f"pdq={summary.pdq_score * 100.0:.3f}\n"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probdet",
        description="Detection-ensemble fusion, post-processing, and PDQ evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    p.add_argument("--detections", nargs="+", required=True,
                   help="detection file(s); several files act as ensemble sources")
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--config", help="pipeline config; omitted = evaluate detections as-is")
    p.add_argument("--out", help="also write the summary JSON to this file")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("merge", help="fuse multi-source detections and write the result")
    p.add_argument("--detections", nargs="+", required=True)
    p.add_argument("--lambda", dest="lambda_iou", type=float, required=True)
    p.add_argument("--strategy", choices=MERGE_STRATEGIES, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("pipeline", help="run the full post-processing pipeline")
    p.add_argument("--detections", nargs="+", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("cache", help="validate and cache detections for sweeping")
    p.add_argument("--detections", nargs="+", required=True)
    p.add_argument("--out", required=True, help="cache directory")
    p.set_defaults(func=_cmd_cache)

    p = sub.add_parser("sweep", help="grid-search pipeline hyperparameters")
    p.add_argument("--cache", required=True, help="cache directory from 'cache'")
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--grid", required=True, help="JSON grid file")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--config", help="base pipeline config for unswept parameters")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return 1
    except (ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
