"""Post-processing heuristics applied after ensemble fusion.

Five independent stages: confidence thresholding, a final low-IoU NMS,
center-crop box reduction, label-mass redistribution, and box-proportional
covariance assignment. The default order (threshold, nms, shrink, labels,
covariance) keeps low thresholds feeding the NMS and computes covariances
from the final box geometry; the order of the post-merge stages is
configurable for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Sequence

from .core import BoundingBox, CornerCovariance, Detection, LabelVector, ProbabilisticBox, iou
from .merge import MergeConfig, merge_ensemble
from .validation import check_non_negative, check_positive_int, check_unit_interval

DEFAULT_STAGE_ORDER = ("threshold", "nms", "shrink", "labels", "covariance")


@dataclass(frozen=True)
class PipelineConfig:
    """All hyperparameters of the post-processing pipeline."""

    confidence_threshold: float = 0.0
    box_reduction_ratio: float = 0.0
    covariance_scale: float = 0.0
    final_nms_iou: float = 1.0
    label_smoothing: bool = False
    merge: MergeConfig = field(default_factory=MergeConfig)
    num_classes: int = 30
    # Eq-variant and ablation switches.
    label_smoothing_normalize: bool = False
    class_aware_nms: bool = False
    stage_order: tuple = DEFAULT_STAGE_ORDER

    def __post_init__(self) -> None:
        check_unit_interval("confidence_threshold", self.confidence_threshold)
        check_unit_interval("box_reduction_ratio", self.box_reduction_ratio)
        if self.box_reduction_ratio >= 1.0:
            raise ValueError("box_reduction_ratio must be < 1")
        check_non_negative("covariance_scale", self.covariance_scale)
        check_unit_interval("final_nms_iou", self.final_nms_iou)
        check_positive_int("num_classes", self.num_classes)
        object.__setattr__(self, "stage_order", tuple(self.stage_order))
        if sorted(self.stage_order) != sorted(DEFAULT_STAGE_ORDER):
            raise ValueError(
                f"stage_order must be a permutation of {DEFAULT_STAGE_ORDER}, "
                f"got {self.stage_order}"
            )


def threshold_filter(dets: Sequence[Detection], t: float) -> List[Detection]:
    """Keep detections scoring at least ``t``, preserving order."""
    check_unit_interval("t", t)
    return [d for d in dets if d.raw_score >= t]


def shrink_box(box: BoundingBox, ratio: float) -> BoundingBox:
    """Center-crop: reduce width and height by ``ratio`` about the center."""
    check_unit_interval("ratio", ratio)
    if ratio >= 1.0:
        raise ValueError("ratio must be < 1")
    dx = ratio * box.width / 2.0
    dy = ratio * box.height / 2.0
    return BoundingBox(box.x1 + dx, box.y1 + dy, box.x2 - dx, box.y2 - dy)


def redistribute_labels(
    labels: LabelVector,
    num_classes: int,
    normalize: bool = False,
) -> LabelVector:
    """Spread the non-predicted probability mass uniformly.

    The predicted class keeps its score S; every other class receives
    ``(1 - S) / K`` (or ``(1 - S) / (K - 1)`` with ``normalize``, which
    makes the vector sum to one).
    """
    check_positive_int("num_classes", num_classes)
    if len(labels) != num_classes:
        raise ValueError(f"label vector has {len(labels)} classes, expected {num_classes}")
    top = labels.argmax
    score = labels[top]
    divisor = (num_classes - 1) if normalize else num_classes
    rest = (1.0 - score) / divisor if divisor > 0 else 0.0
    return LabelVector([score if k == top else rest for k in range(num_classes)])


def assign_covariance(box: BoundingBox, scale: float) -> ProbabilisticBox:
    """Give both corners a diagonal covariance proportional to the box size.

    The x variance is ``scale * width`` and the y variance
    ``scale * height``, in squared pixels.
    """
    check_non_negative("scale", scale)
    cov = CornerCovariance.diagonal(scale * box.width, scale * box.height)
    return ProbabilisticBox(box, cov, cov)


def final_nms(dets: Sequence[Detection], iou_threshold: float, class_aware: bool = False) -> List[Detection]:
    """Hard NMS: higher-confidence boxes absorb overlapping lower ones.

    Class-agnostic by default, so large confident boxes can absorb small
    low-confidence ones of any class; ``class_aware`` restricts
    suppression to detections sharing a predicted class.
    """
    check_unit_interval("iou_threshold", iou_threshold)
    order = sorted(range(len(dets)), key=lambda k: (-dets[k].raw_score, k))
    kept: List[Detection] = []
    for k in order:
        cand = dets[k]
        suppressed = False
        for other in kept:
            if class_aware and other.labels.argmax != cand.labels.argmax:
                continue
            if iou(other.box, cand.box) >= iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(cand)
    return kept


def _with_box(det: Detection, box: BoundingBox) -> Detection:
    return replace(det, pbox=ProbabilisticBox(box, det.pbox.cov_top_left, det.pbox.cov_bottom_right))


def apply_post_merge(dets: Sequence[Detection], config: PipelineConfig) -> List[Detection]:
    """Run the post-merge stages in the configured order."""
    out = list(dets)
    for stage in config.stage_order:
        if stage == "threshold":
            out = threshold_filter(out, config.confidence_threshold)
        elif stage == "nms":
            out = final_nms(out, config.final_nms_iou, config.class_aware_nms)
        elif stage == "shrink":
            out = [_with_box(d, shrink_box(d.box, config.box_reduction_ratio)) for d in out]
        elif stage == "labels":
            if config.label_smoothing:
                out = [
                    replace(d, labels=redistribute_labels(
                        d.labels, config.num_classes, config.label_smoothing_normalize))
                    for d in out
                ]
        elif stage == "covariance":
            out = [
                replace(d, pbox=assign_covariance(d.box, config.covariance_scale))
                for d in out
            ]
    return out


def run_pipeline(
    frame_sources: Sequence[Sequence[Sequence[Detection]]],
    config: PipelineConfig,
) -> List[List[Detection]]:
    """Full per-frame pipeline: ensemble fusion, then post-merge stages.

    ``frame_sources[f][s]`` is the detection list of source ``s`` in
    frame ``f``. Deterministic: identical inputs give identical outputs.
    """
    return [
        apply_post_merge(merge_ensemble(sources, config.merge), config)
        for sources in frame_sources
    ]
