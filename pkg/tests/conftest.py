from __future__ import annotations

import numpy as np
import pytest

from probdet.core import (
    BoundingBox,
    Detection,
    Frame,
    GroundTruthObject,
    LabelVector,
    ProbabilisticBox,
)


def make_detection(box, class_id=0, score=0.9, num_classes=5, source_id="s0"):
    return Detection(
        pbox=ProbabilisticBox.crisp(BoundingBox(*box)),
        labels=LabelVector.one_hot(class_id, num_classes, score),
        source_id=source_id,
    )


def random_box(rng: np.random.Generator, image_size: int, max_side: int = 30) -> BoundingBox:
    max_side = min(max_side, image_size)
    w = rng.uniform(1.0, max_side)
    h = rng.uniform(1.0, max_side)
    x1 = rng.uniform(0.0, image_size - w)
    y1 = rng.uniform(0.0, image_size - h)
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def random_labels(rng: np.random.Generator, num_classes: int, zero_rate: float = 0.3) -> LabelVector:
    raw = rng.uniform(0.0, 1.0, num_classes)
    raw[rng.uniform(0.0, 1.0, num_classes) < zero_rate] = 0.0
    total = raw.sum()
    if total > 0:
        raw = raw / total * rng.uniform(0.3, 1.0)
    return LabelVector(raw.tolist())


def random_frame(
    rng: np.random.Generator,
    frame_id: int = 0,
    image_size: int = 48,
    max_gts: int = 4,
    max_dets: int = 4,
    num_classes: int = 5,
    with_covariance: bool = False,
) -> Frame:
    gts = tuple(
        GroundTruthObject(class_id=int(rng.integers(num_classes)),
                          box=random_box(rng, image_size, 20))
        for _ in range(int(rng.integers(0, max_gts + 1)))
    )
    dets = []
    for _ in range(int(rng.integers(0, max_dets + 1))):
        box = random_box(rng, image_size, 20)
        if with_covariance:
            from probdet.core import CornerCovariance
            cov = CornerCovariance.diagonal(float(rng.uniform(0, 4)), float(rng.uniform(0, 4)))
            pbox = ProbabilisticBox(box, cov, cov)
        else:
            pbox = ProbabilisticBox.crisp(box)
        dets.append(Detection(pbox=pbox, labels=random_labels(rng, num_classes)))
    return Frame(frame_id=frame_id, image_width=image_size, image_height=image_size,
                 detections=tuple(dets), ground_truths=gts)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
