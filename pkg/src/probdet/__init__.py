"""Probabilistic detection toolkit: ensemble fusion, heuristics, PDQ scoring."""

from .core import (
    BoundingBox,
    CornerCovariance,
    Detection,
    Frame,
    GroundTruthObject,
    LabelVector,
    ProbabilisticBox,
    iou,
    mask_of,
)
from .estimators import DetectionPostProcessor, EnsembleMerger
from .heatmap import PixelProbabilityField, gaussian_corner_cdf, pixel_field, spatial_quality
from .heuristics import (
    PipelineConfig,
    assign_covariance,
    final_nms,
    redistribute_labels,
    run_pipeline,
    shrink_box,
    threshold_filter,
)
from .merge import (
    MergeConfig,
    ObservationGroup,
    cluster,
    concat_detections,
    merge_ensemble,
    merge_group,
)
from .pdq import (
    EvalSummary,
    FrameEvaluation,
    PairQuality,
    evaluate_frame,
    evaluate_sequence,
    label_quality,
    pair_quality,
)
from .sweep import DetectionCache, SweepGrid, SweepResult, cache_detections, report, run_sweep

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CornerCovariance",
    "Detection",
    "DetectionCache",
    "DetectionPostProcessor",
    "EnsembleMerger",
    "EvalSummary",
    "Frame",
    "FrameEvaluation",
    "GroundTruthObject",
    "LabelVector",
    "MergeConfig",
    "ObservationGroup",
    "PairQuality",
    "PipelineConfig",
    "PixelProbabilityField",
    "ProbabilisticBox",
    "SweepGrid",
    "SweepResult",
    "assign_covariance",
    "cache_detections",
    "cluster",
    "concat_detections",
    "evaluate_frame",
    "evaluate_sequence",
    "final_nms",
    "gaussian_corner_cdf",
    "iou",
    "label_quality",
    "mask_of",
    "merge_ensemble",
    "merge_group",
    "pair_quality",
    "pixel_field",
    "redistribute_labels",
    "report",
    "run_pipeline",
    "run_sweep",
    "shrink_box",
    "spatial_quality",
    "threshold_filter",
]
