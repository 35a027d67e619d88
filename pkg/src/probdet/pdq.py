"""Frame assignment and PDQ scoring.

Detections are matched one-to-one to ground truths by maximizing the
total pairwise quality with an optimal linear-sum assignment. Pairs of
zero quality are treated as non-assignments: the detection stays a false
positive and the ground truth a false negative. The sequence score is the
sum of matched pair qualities divided by the total number of true
positives, false positives, and false negatives across all frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, MutableMapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Detection, Frame, GroundTruthObject, box_pixel_count
from .heatmap import PixelProbabilityField, pixel_field, spatial_quality

# Cache key for a (ground truth, detection geometry) spatial quality.
SpatialKey = Tuple[int, int, float, float, float, float, float, float, float, float]
SpatialCache = MutableMapping[SpatialKey, float]

# Pair qualities below this floor are treated as exactly zero for
# assignment and TP counting. Far-apart pairs produce qualities like
# exp(-100) whose sums cannot be ranked reproducibly in double
# precision; the floor makes the matching deterministic.
PPDQ_FLOOR = 1e-12


@dataclass(frozen=True)
class PairQuality:
    """Spatial and label quality of one matched pair, and their geometric mean."""

    spatial_q: float
    label_q: float
    ppdq: float

    def __post_init__(self) -> None:
        expected = math.sqrt(self.spatial_q * self.label_q)
        if abs(self.ppdq - expected) > 1e-12:
            raise ValueError(f"ppdq {self.ppdq!r} is not the geometric mean of "
                             f"({self.spatial_q!r}, {self.label_q!r})")

    @classmethod
    def from_components(cls, spatial_q: float, label_q: float) -> "PairQuality":
        return cls(spatial_q, label_q, math.sqrt(spatial_q * label_q))

    @classmethod
    def zero(cls) -> "PairQuality":
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class FrameEvaluation:
    """Assignment outcome of one frame."""

    assignments: Tuple[Tuple[int, int, PairQuality], ...]
    tp: int
    fp: int
    fn: int
    fp_label_qualities: Tuple[float, ...]


@dataclass(frozen=True)
class EvalSummary:
    """Sequence-level score and the usual table statistics.

    Averages are over true-positive pairs, except ``avg_fp_quality``
    which is the mean of ``1 - max(labels)`` over false-positive
    detections (0 when there are none).
    """

    pdq_score: float
    avg_ppdq: float
    avg_spatial_q: float
    avg_label_q: float
    avg_fp_quality: float
    total_tp: int
    total_fp: int
    total_fn: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "pdq_score": self.pdq_score,
            "pdq_score_pct": round(self.pdq_score * 100.0, 3),
            "avg_ppdq": self.avg_ppdq,
            "avg_spatial_q": self.avg_spatial_q,
            "avg_label_q": self.avg_label_q,
            "avg_fp_quality": self.avg_fp_quality,
            "total_tp": self.total_tp,
            "total_fp": self.total_fp,
            "total_fn": self.total_fn,
        }


def label_quality(g: GroundTruthObject, d: Detection) -> float:
    """Probability the detection assigns to the ground-truth class."""
    if g.class_id >= len(d.labels):
        raise ValueError(
            f"class_id {g.class_id} out of range for {len(d.labels)} classes"
        )
    return d.labels[g.class_id]


def pair_quality(
    g: GroundTruthObject,
    d: Detection,
    image_w: int,
    image_h: int,
    field: Optional[PixelProbabilityField] = None,
) -> PairQuality:
    """Quality of one (ground truth, detection) pair.

    A degenerate ground truth whose box contains no pixels yields the
    all-zero quality.
    """
    if box_pixel_count(g.box) == 0:
        return PairQuality.zero()
    if field is None:
        field = pixel_field(d.pbox, image_w, image_h)
    sq = spatial_quality(g, field)
    lq = label_quality(g, d)
    return PairQuality.from_components(sq, lq)


def _spatial_key(frame_id: int, gt_idx: int, d: Detection) -> SpatialKey:
    box = d.pbox.box
    tl, br = d.pbox.cov_top_left, d.pbox.cov_bottom_right
    return (
        frame_id, gt_idx,
        box.x1, box.y1, box.x2, box.y2,
        tl.cxx, tl.cyy, br.cxx, br.cyy,
    )


def _optimal_pairs(q: np.ndarray) -> list[tuple[int, int]]:
    """One-to-one assignment maximizing total quality, as (row, col) pairs."""
    n_rows, n_cols = q.shape
    if n_rows == 0 or n_cols == 0:
        return []
    if n_rows == 1:
        return [(0, int(np.argmax(q[0])))]
    if n_cols == 1:
        return [(int(np.argmax(q[:, 0])), 0)]
    rows, cols = linear_sum_assignment(q, maximize=True)
    return list(zip(rows.tolist(), cols.tolist()))


def evaluate_frame(frame: Frame, spatial_cache: Optional[SpatialCache] = None) -> FrameEvaluation:
    """Assign detections to ground truths and count TP/FP/FN for one frame.

    Pair qualities below ``PPDQ_FLOOR`` count as zero, so they neither
    join the matching nor become true positives. ``spatial_cache``
    optionally memoizes spatial qualities across repeated evaluations of
    identical geometry (used by the sweep engine); it never changes
    results, only skips recomputation.
    """
    gts = frame.ground_truths
    dets = frame.detections
    n_g, n_d = len(gts), len(dets)

    fields: list[Optional[PixelProbabilityField]] = [None] * n_d

    def get_field(j: int) -> PixelProbabilityField:
        f = fields[j]
        if f is None:
            f = pixel_field(dets[j].pbox, frame.image_width, frame.image_height)
            fields[j] = f
        return f

    def get_spatial(i: int, j: int) -> float:
        if spatial_cache is None:
            return spatial_quality(gts[i], get_field(j))
        key = _spatial_key(frame.frame_id, i, dets[j])
        sq = spatial_cache.get(key)
        if sq is None:
            sq = spatial_quality(gts[i], get_field(j))
            spatial_cache[key] = sq
        return sq

    q = np.zeros((n_g, n_d), dtype=np.float64)
    spatials: Dict[Tuple[int, int], float] = {}
    for i, g in enumerate(gts):
        if box_pixel_count(g.box) == 0:
            continue  # unmatchable: stays a false negative
        for j, d in enumerate(dets):
            lq = label_quality(g, d)
            if lq == 0.0:
                continue  # zero quality regardless of geometry
            sq = get_spatial(i, j)
            ppdq = math.sqrt(sq * lq)
            if ppdq < PPDQ_FLOOR:
                continue
            spatials[(i, j)] = sq
            q[i, j] = ppdq

    assignments = []
    matched_dets = set()
    for i, j in _optimal_pairs(q):
        if q[i, j] > 0.0:
            pq = PairQuality(spatials[(i, j)], label_quality(gts[i], dets[j]), float(q[i, j]))
            assignments.append((i, j, pq))
            matched_dets.add(j)
    assignments.sort(key=lambda t: t[0])

    tp = len(assignments)
    fp_label_qualities = tuple(
        1.0 - dets[j].raw_score for j in range(n_d) if j not in matched_dets
    )
    return FrameEvaluation(
        assignments=tuple(assignments),
        tp=tp,
        fp=n_d - tp,
        fn=n_g - tp,
        fp_label_qualities=fp_label_qualities,
    )


def summarize(evaluations: Sequence[FrameEvaluation]) -> EvalSummary:
    """Aggregate per-frame evaluations into the sequence summary."""
    ppdqs = [pq.ppdq for ev in evaluations for (_, _, pq) in ev.assignments]
    spatials = [pq.spatial_q for ev in evaluations for (_, _, pq) in ev.assignments]
    labels = [pq.label_q for ev in evaluations for (_, _, pq) in ev.assignments]
    fp_quals = [v for ev in evaluations for v in ev.fp_label_qualities]

    total_tp = sum(ev.tp for ev in evaluations)
    total_fp = sum(ev.fp for ev in evaluations)
    total_fn = sum(ev.fn for ev in evaluations)

    denom = total_tp + total_fp + total_fn
    pdq = math.fsum(ppdqs) / denom if denom > 0 else 0.0

    def mean(values: list) -> float:
        return math.fsum(values) / len(values) if values else 0.0

    return EvalSummary(
        pdq_score=pdq,
        avg_ppdq=mean(ppdqs),
        avg_spatial_q=mean(spatials),
        avg_label_q=mean(labels),
        avg_fp_quality=mean(fp_quals),
        total_tp=total_tp,
        total_fp=total_fp,
        total_fn=total_fn,
    )


def evaluate_sequence(
    frames: Sequence[Frame],
    spatial_cache: Optional[SpatialCache] = None,
) -> EvalSummary:
    """Evaluate every frame and aggregate into a sequence summary."""
    if not frames:
        raise ValueError("evaluate_sequence requires at least one frame")
    return summarize([evaluate_frame(f, spatial_cache) for f in frames])
