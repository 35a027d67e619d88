"""Domain types and box geometry shared by every other module.

All types are immutable value objects: once constructed they can be shared
freely across worker processes. Boxes live in continuous image coordinates
(origin top-left, x right, y down); rasterization to pixels happens only
where a pixel set is actually needed (masks, probability fields).

Pixel convention: pixel ``(i, j)`` belongs to a box iff its center
``(i + 0.5, j + 0.5)`` lies inside the closed box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import FrozenSet, Iterator, Optional, Sequence, Tuple

from .validation import check_finite

Pixel = Tuple[int, int]

# Determinant slack for covariance PSD checks; element-wise averaging of
# exactly-PSD matrices can round the determinant slightly negative.
_PSD_SLACK = 1e-9


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box ``(x1, y1) <= (x2, y2)`` in pixel coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            check_finite(f"BoundingBox.{name}", getattr(self, name))
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(
                f"BoundingBox corners out of order: ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def area(self) -> float:
        return self.width * self.height

    def center(self) -> Tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.x1, self.y1, self.x2, self.y2


def pixel_span(lo: float, hi: float) -> Tuple[int, int]:
    """Inclusive index range of pixels whose centers fall in ``[lo, hi]``.

    Returns ``(first, last)`` with ``first > last`` when the interval
    contains no pixel center.
    """
    # ceil/floor on (bound - 0.5) can be off by one ulp; re-check against the
    # exact center predicate and adjust.
    first = math.ceil(lo - 0.5)
    if (first - 1) + 0.5 >= lo:
        first -= 1
    if first + 0.5 < lo:
        first += 1
    last = math.floor(hi - 0.5)
    if (last + 1) + 0.5 <= hi:
        last += 1
    if last + 0.5 > hi:
        last -= 1
    return first, last


def box_pixel_bounds(box: BoundingBox) -> Tuple[int, int, int, int]:
    """Inclusive pixel-index bounds ``(ix0, iy0, ix1, iy1)`` of a box."""
    ix0, ix1 = pixel_span(box.x1, box.x2)
    iy0, iy1 = pixel_span(box.y1, box.y2)
    return ix0, iy0, ix1, iy1


def box_pixel_count(box: BoundingBox) -> int:
    """Number of pixels whose centers lie inside the closed box."""
    ix0, iy0, ix1, iy1 = box_pixel_bounds(box)
    if ix1 < ix0 or iy1 < iy0:
        return 0
    return (ix1 - ix0 + 1) * (iy1 - iy0 + 1)


def box_pixels(box: BoundingBox) -> Iterator[Pixel]:
    """Iterate pixels of the box in row-major (y, then x) order."""
    ix0, iy0, ix1, iy1 = box_pixel_bounds(box)
    for j in range(iy0, iy1 + 1):
        for i in range(ix0, ix1 + 1):
            yield (i, j)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when the union has no area."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class CornerCovariance:
    """2x2 symmetric PSD covariance of one box corner, stored as upper triangle."""

    cxx: float
    cxy: float
    cyy: float

    def __post_init__(self) -> None:
        for name in ("cxx", "cxy", "cyy"):
            check_finite(f"CornerCovariance.{name}", getattr(self, name))
        det = self.cxx * self.cyy - self.cxy * self.cxy
        if self.cxx < 0.0 or self.cyy < 0.0 or det < -_PSD_SLACK * max(1.0, abs(self.cxx * self.cyy)):
            raise ValueError(
                f"CornerCovariance not positive semi-definite: "
                f"[[{self.cxx}, {self.cxy}], [{self.cxy}, {self.cyy}]]"
            )

    @classmethod
    def zero(cls) -> "CornerCovariance":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def diagonal(cls, var_x: float, var_y: float) -> "CornerCovariance":
        return cls(var_x, 0.0, var_y)

    @property
    def is_diagonal(self) -> bool:
        return self.cxy == 0.0

    def as_matrix(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        return (self.cxx, self.cxy), (self.cxy, self.cyy)


@dataclass(frozen=True)
class ProbabilisticBox:
    """Box whose two corners are independent 2D Gaussians."""

    box: BoundingBox
    cov_top_left: CornerCovariance = field(default_factory=CornerCovariance.zero)
    cov_bottom_right: CornerCovariance = field(default_factory=CornerCovariance.zero)

    @classmethod
    def crisp(cls, box: BoundingBox) -> "ProbabilisticBox":
        return cls(box, CornerCovariance.zero(), CornerCovariance.zero())


# Entries may exceed 1.0 by at most this much (mean/serialization rounding).
_PROB_SLACK = 1e-12
# Sub-normalized vectors are allowed; over-normalization only up to this slack.
_SUM_SLACK = 1e-6


@dataclass(frozen=True)
class LabelVector:
    """Per-class probabilities; may sum to less than one (sub-normalized)."""

    probs: Tuple[float, ...]

    def __init__(self, probs: Sequence[float]) -> None:
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))
        self._validate()

    def _validate(self) -> None:
        if not self.probs:
            raise ValueError("LabelVector must have at least one class")
        total = 0.0
        for k, p in enumerate(self.probs):
            if not math.isfinite(p) or p < 0.0 or p > 1.0 + _PROB_SLACK:
                raise ValueError(f"LabelVector.probs[{k}] out of [0, 1]: {p!r}")
            total += p
        if total > 1.0 + _SUM_SLACK:
            raise ValueError(f"LabelVector sums to {total!r} > 1")

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, class_id: int) -> float:
        return self.probs[class_id]

    @property
    def max_prob(self) -> float:
        return max(self.probs)

    @property
    def argmax(self) -> int:
        """Index of the largest entry; ties break toward the lowest class id."""
        best = 0
        for k in range(1, len(self.probs)):
            if self.probs[k] > self.probs[best]:
                best = k
        return best

    @classmethod
    def one_hot(cls, class_id: int, num_classes: int, score: float = 1.0) -> "LabelVector":
        probs = [0.0] * num_classes
        probs[class_id] = score
        return cls(probs)


@dataclass(frozen=True)
class Detection:
    """One probabilistic detection: geometry, label distribution, provenance.

    ``raw_score`` is always the max label entry; it is derived at
    construction and can never go stale because the type is immutable.
    """

    pbox: ProbabilisticBox
    labels: LabelVector
    source_id: str = ""

    @property
    def box(self) -> BoundingBox:
        return self.pbox.box

    @property
    def raw_score(self) -> float:
        return self.labels.max_prob


@dataclass(frozen=True)
class GroundTruthObject:
    """Annotated object: class, true box, optional explicit pixel mask."""

    class_id: int
    box: BoundingBox
    mask: Optional[FrozenSet[Pixel]] = None

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        if self.mask is not None:
            object.__setattr__(self, "mask", frozenset(self.mask))
            if not self.mask:
                raise ValueError("mask must be non-empty when present")
            ix0, iy0, ix1, iy1 = box_pixel_bounds(self.box)
            for (i, j) in self.mask:
                if not (ix0 <= i <= ix1 and iy0 <= j <= iy1):
                    raise ValueError(
                        f"mask pixel ({i}, {j}) lies outside box pixels "
                        f"[{ix0}..{ix1}] x [{iy0}..{iy1}]"
                    )


def mask_of(g: GroundTruthObject) -> FrozenSet[Pixel]:
    """Pixel set of a ground-truth object.

    The explicit mask when present, otherwise the pixels of the box.
    Empty for a degenerate zero-area box, which callers must treat as an
    unmatchable ground truth.
    """
    if g.mask is not None:
        return g.mask
    return frozenset(box_pixels(g.box))


@dataclass(frozen=True)
class Frame:
    """One image: its detections and its ground-truth objects."""

    frame_id: int
    image_width: int
    image_height: int
    detections: Tuple[Detection, ...] = ()
    ground_truths: Tuple[GroundTruthObject, ...] = ()

    def __post_init__(self) -> None:
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError(
                f"frame {self.frame_id}: image dims must be positive, "
                f"got {self.image_width}x{self.image_height}"
            )
        object.__setattr__(self, "detections", tuple(self.detections))
        object.__setattr__(self, "ground_truths", tuple(self.ground_truths))
        for d in self.detections:
            self._check_box(d.box, "detection")
        for g in self.ground_truths:
            self._check_box(g.box, "ground truth")

    def _check_box(self, box: BoundingBox, kind: str) -> None:
        if box.x1 < 0 or box.y1 < 0 or box.x2 > self.image_width or box.y2 > self.image_height:
            raise ValueError(
                f"frame {self.frame_id}: {kind} box {box.as_tuple()} exceeds "
                f"image bounds {self.image_width}x{self.image_height}"
            )

    def with_detections(self, detections: Sequence[Detection]) -> "Frame":
        return Frame(
            frame_id=self.frame_id,
            image_width=self.image_width,
            image_height=self.image_height,
            detections=tuple(detections),
            ground_truths=self.ground_truths,
        )
