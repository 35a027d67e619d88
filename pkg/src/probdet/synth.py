"""Seeded synthetic benchmark scenes for desk-scale experiments.

Generates a ground-truth sequence plus two simulated "detectors" whose
outputs are correlated but differently calibrated: detector A places
tight, confident, correctly-labeled boxes; detector B produces shifted,
inflated, lower-confidence boxes that sometimes carry the wrong label and
occasionally a spurious detection. Keeping the most confident member of
each fused observation should therefore beat averaging, which is exactly
what the directional acceptance benchmark checks.

Everything is driven by a single integer seed so benchmarks are
reproducible.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .core import BoundingBox, Detection, Frame, LabelVector, ProbabilisticBox
from .fileio import DetectionSequence, GroundTruthSequence
from .core import GroundTruthObject

DEFAULT_IMAGE_SIZE = 48
DEFAULT_NUM_CLASSES = 8


def _clip_box(x1: float, y1: float, x2: float, y2: float, size: int) -> BoundingBox:
    x1, x2 = sorted((min(max(x1, 0.0), size), min(max(x2, 0.0), size)))
    y1, y2 = sorted((min(max(y1, 0.0), size), min(max(y2, 0.0), size)))
    return BoundingBox(x1, y1, x2, y2)


def _label(class_id: int, score: float, num_classes: int) -> LabelVector:
    return LabelVector.one_hot(class_id, num_classes, round(float(score), 6))


def make_benchmark(
    n_frames: int,
    seed: int = 0,
    image_size: int = DEFAULT_IMAGE_SIZE,
    num_classes: int = DEFAULT_NUM_CLASSES,
    max_objects: int = 2,
    fp_rate: float = 0.15,
) -> Tuple[List[DetectionSequence], GroundTruthSequence]:
    """Build the two-detector benchmark: ``([detector_a, detector_b], gt)``."""
    rng = np.random.default_rng(seed)
    gt_frames: List[Frame] = []
    a_frames: List[Frame] = []
    b_frames: List[Frame] = []

    for frame_id in range(n_frames):
        n_objects = int(rng.integers(1, max_objects + 1))
        gts: List[GroundTruthObject] = []
        dets_a: List[Detection] = []
        dets_b: List[Detection] = []
        for _ in range(n_objects):
            cx = rng.uniform(14.0, image_size - 14.0)
            cy = rng.uniform(14.0, image_size - 14.0)
            hw = rng.uniform(5.0, 9.0)
            hh = rng.uniform(5.0, 9.0)
            class_id = int(rng.integers(num_classes))
            gts.append(GroundTruthObject(
                class_id=class_id,
                box=_clip_box(cx - hw, cy - hh, cx + hw, cy + hh, image_size),
            ))

            # Detector A: tight box, confident and correct label.
            jitter = rng.normal(0.0, 0.25, size=4)
            box_a = _clip_box(cx - hw + jitter[0], cy - hh + jitter[1],
                              cx + hw + jitter[2], cy + hh + jitter[3], image_size)
            score_a = rng.uniform(0.75, 0.95)
            dets_a.append(Detection(
                pbox=ProbabilisticBox.crisp(box_a),
                labels=_label(class_id, score_a, num_classes),
                source_id="det_a",
            ))

            # Detector B: shifted, inflated, less confident, sometimes wrong.
            shift_x = 0.15 * 2 * hw * (1 if rng.random() < 0.5 else -1)
            shift_y = 0.15 * 2 * hh * (1 if rng.random() < 0.5 else -1)
            scale_b = 1.15
            box_b = _clip_box(
                cx + shift_x - hw * scale_b, cy + shift_y - hh * scale_b,
                cx + shift_x + hw * scale_b, cy + shift_y + hh * scale_b,
                image_size,
            )
            if rng.random() < 0.3:
                label_b = int(rng.integers(num_classes))
            else:
                label_b = class_id
            score_b = rng.uniform(0.40, 0.60)
            dets_b.append(Detection(
                pbox=ProbabilisticBox.crisp(box_b),
                labels=_label(label_b, score_b, num_classes),
                source_id="det_b",
            ))

        if rng.random() < fp_rate:
            fx = rng.uniform(6.0, image_size - 6.0)
            fy = rng.uniform(6.0, image_size - 6.0)
            dets_b.append(Detection(
                pbox=ProbabilisticBox.crisp(
                    _clip_box(fx - 4.0, fy - 4.0, fx + 4.0, fy + 4.0, image_size)),
                labels=_label(int(rng.integers(num_classes)),
                              rng.uniform(0.30, 0.50), num_classes),
                source_id="det_b",
            ))

        gt_frames.append(Frame(frame_id=frame_id, image_width=image_size,
                               image_height=image_size, ground_truths=tuple(gts)))
        a_frames.append(Frame(frame_id=frame_id, image_width=image_size,
                              image_height=image_size, detections=tuple(dets_a)))
        b_frames.append(Frame(frame_id=frame_id, image_width=image_size,
                              image_height=image_size, detections=tuple(dets_b)))

    detectors = [
        DetectionSequence(num_classes=num_classes, frames=tuple(a_frames)),
        DetectionSequence(num_classes=num_classes, frames=tuple(b_frames)),
    ]
    gt = GroundTruthSequence(num_classes=num_classes, frames=tuple(gt_frames))
    return detectors, gt
