"""Fusion of detections from several detectors or dropout passes.

Detections from all sources are concatenated, grouped into observations
with a greedy NMS-style clustering (the highest-scoring unclustered
detection seeds a group and absorbs everything overlapping it at IoU >=
lambda), and each group is reduced to one detection per the configured
strategy. Keeping the most confident member verbatim is the default;
averaging variants are provided for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .core import BoundingBox, CornerCovariance, Detection, LabelVector, ProbabilisticBox, iou
from .validation import check_choice, check_unit_interval

MERGE_STRATEGIES = ("most_confident", "average", "average_same_label")


@dataclass(frozen=True)
class MergeConfig:
    """Clustering threshold and reduction strategy for ensemble fusion."""

    lambda_iou: float = 0.5
    strategy: str = "most_confident"

    def __post_init__(self) -> None:
        check_unit_interval("lambda_iou", self.lambda_iou)
        check_choice("strategy", self.strategy, MERGE_STRATEGIES)


@dataclass(frozen=True)
class ObservationGroup:
    """Indices (into the concatenated detection list) of one observation.

    Members are ordered by descending raw score; ties keep concatenation
    order, so the seed is always first.
    """

    member_indices: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.member_indices:
            raise ValueError("ObservationGroup must be non-empty")


def concat_detections(sources: Sequence[Sequence[Detection]]) -> List[Detection]:
    """Concatenate per-source detection lists, preserving order.

    All sources must agree on the number of classes.
    """
    out: List[Detection] = []
    n_classes = None
    for s_idx, source in enumerate(sources):
        for d_idx, det in enumerate(source):
            if n_classes is None:
                n_classes = len(det.labels)
            elif len(det.labels) != n_classes:
                raise ValueError(
                    f"source {s_idx} detection {d_idx} has {len(det.labels)} classes, "
                    f"expected {n_classes}"
                )
            out.append(det)
    return out


def cluster(detections: Sequence[Detection], lambda_iou: float) -> List[ObservationGroup]:
    """Greedy seed-relative clustering by IoU.

    Repeatedly takes the highest-scoring unclustered detection as a seed
    and absorbs every unclustered detection whose IoU with the seed is at
    least ``lambda_iou``. Absorption is relative to the seed only, not
    transitive. Score ties break toward the earlier detection.
    """
    check_unit_interval("lambda_iou", lambda_iou)
    order = sorted(range(len(detections)), key=lambda k: (-detections[k].raw_score, k))
    unclustered = set(order)
    groups: List[ObservationGroup] = []
    for seed in order:
        if seed not in unclustered:
            continue
        members = [seed]
        unclustered.discard(seed)
        seed_box = detections[seed].box
        for k in order:
            if k in unclustered and iou(seed_box, detections[k].box) >= lambda_iou:
                members.append(k)
                unclustered.discard(k)
        # order holds descending score already, so members are sorted
        groups.append(ObservationGroup(tuple(members)))
    return groups


def _average_members(members: Sequence[Detection]) -> Detection:
    n = len(members)
    if n == 1:
        return members[0]
    box = BoundingBox(
        sum(d.box.x1 for d in members) / n,
        sum(d.box.y1 for d in members) / n,
        sum(d.box.x2 for d in members) / n,
        sum(d.box.y2 for d in members) / n,
    )

    def mean_cov(pick) -> CornerCovariance:
        return CornerCovariance(
            sum(pick(d).cxx for d in members) / n,
            sum(pick(d).cxy for d in members) / n,
            sum(pick(d).cyy for d in members) / n,
        )

    labels = LabelVector(
        [sum(d.labels[k] for d in members) / n for k in range(len(members[0].labels))]
    )
    return Detection(
        pbox=ProbabilisticBox(
            box,
            mean_cov(lambda d: d.pbox.cov_top_left),
            mean_cov(lambda d: d.pbox.cov_bottom_right),
        ),
        labels=labels,
        source_id=members[0].source_id,
    )


def merge_group(
    group: ObservationGroup,
    detections: Sequence[Detection],
    strategy: str,
) -> List[Detection]:
    """Reduce one observation group to its merged detection(s).

    ``most_confident`` returns the top-scoring member verbatim;
    ``average`` returns the unweighted member mean (corners, covariances,
    labels); ``average_same_label`` first splits the group by predicted
    class and averages each sub-group, so it can return several
    detections.
    """
    check_choice("strategy", strategy, MERGE_STRATEGIES)
    members = [detections[k] for k in group.member_indices]
    if strategy == "most_confident":
        return [members[0]]
    if strategy == "average":
        return [_average_members(members)]
    by_label: Dict[int, List[Detection]] = {}
    for d in members:
        by_label.setdefault(d.labels.argmax, []).append(d)
    # sub-groups in order of their best member (members are score-sorted)
    return [_average_members(sub) for sub in by_label.values()]


def merge_ensemble(
    sources: Sequence[Sequence[Detection]],
    config: MergeConfig,
    merge_within_sources_first: bool = False,
) -> List[Detection]:
    """Concatenate, cluster, and reduce all sources into one detection list.

    With ``merge_within_sources_first`` each source (e.g. a set of
    dropout passes) is fused on its own before the cross-source pass; by
    default all sources are merged in a single pass.
    """
    if merge_within_sources_first:
        sources = [merge_ensemble([s], config) for s in sources]
    detections = concat_detections(sources)
    merged: List[Detection] = []
    for group in cluster(detections, config.lambda_iou):
        merged.extend(merge_group(group, detections, config.strategy))
    merged.sort(key=lambda d: -d.raw_score)
    return merged
