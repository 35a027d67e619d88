from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probdet.core import (
    BoundingBox,
    CornerCovariance,
    Detection,
    Frame,
    GroundTruthObject,
    LabelVector,
    ProbabilisticBox,
    box_pixel_count,
    box_pixels,
    iou,
    mask_of,
)

from .oracles import pixel_iou, pixels_in_box


def finite_boxes(max_coord: float = 100.0):
    coord = st.floats(min_value=0.0, max_value=max_coord, allow_nan=False, allow_infinity=False)
    return st.tuples(coord, coord, coord, coord).map(
        lambda t: BoundingBox(min(t[0], t[2]), min(t[1], t[3]), max(t[0], t[2]), max(t[1], t[3]))
    )


def integer_boxes(max_side: int = 50):
    x1 = st.integers(min_value=0, max_value=60)
    y1 = st.integers(min_value=0, max_value=60)
    w = st.integers(min_value=0, max_value=max_side)
    h = st.integers(min_value=0, max_value=max_side)
    return st.tuples(x1, y1, w, h).map(
        lambda t: BoundingBox(float(t[0]), float(t[1]), float(t[0] + t[2]), float(t[1] + t[3]))
    )


class TestIou:
    def test_identity(self):
        box = BoundingBox(3.0, 4.0, 10.0, 12.0)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 5, 5), BoundingBox(10, 10, 20, 20)) == 0.0

    def test_touching_edges_is_zero(self):
        assert iou(BoundingBox(0, 0, 5, 5), BoundingBox(5, 0, 10, 5)) == 0.0

    def test_half_overlap(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 0, 15, 10)
        assert iou(a, b) == pytest.approx(1.0 / 3.0, rel=1e-15)
        assert iou(a, b) == pixel_iou(a, b)

    def test_zero_area_boxes(self):
        point = BoundingBox(5, 5, 5, 5)
        assert iou(point, point) == 0.0
        assert iou(point, BoundingBox(0, 0, 10, 10)) == 0.0

    @given(finite_boxes(), finite_boxes())
    def test_symmetry(self, a, b):
        assert iou(a, b) == iou(b, a)

    @given(finite_boxes())
    def test_self_iou(self, box):
        if box.area() > 0:
            assert iou(box, box) == 1.0

    @given(finite_boxes(), finite_boxes())
    def test_range(self, a, b):
        assert 0.0 <= iou(a, b) <= 1.0

    @settings(max_examples=200)
    @given(integer_boxes(), integer_boxes())
    def test_matches_pixel_enumeration_on_integer_boxes(self, a, b):
        assert iou(a, b) == pixel_iou(a, b)


class TestPixelRasterization:
    def test_box_pixels_2x2(self):
        assert set(box_pixels(BoundingBox(0, 0, 2, 2))) == {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_zero_area_box_has_no_pixels(self):
        assert box_pixel_count(BoundingBox(3, 3, 3, 3)) == 0
        assert list(box_pixels(BoundingBox(3, 3, 3, 3))) == []

    @given(finite_boxes(30.0))
    def test_count_matches_enumeration(self, box):
        assert box_pixel_count(box) == len(pixels_in_box(box))
        assert set(box_pixels(box)) == pixels_in_box(box)

    def test_fractional_box(self):
        # centers at half-integers: box [0.4, 1.6] holds centers 0.5 and 1.5
        assert set(box_pixels(BoundingBox(0.4, 0.4, 1.6, 1.6))) == {(0, 0), (0, 1), (1, 0), (1, 1)}


class TestMaskOf:
    def test_explicit_mask_returned_verbatim(self):
        mask = frozenset({(1, 1), (2, 1)})
        g = GroundTruthObject(class_id=0, box=BoundingBox(0, 0, 4, 4), mask=mask)
        assert mask_of(g) == mask

    def test_fallback_to_box_pixels(self):
        g = GroundTruthObject(class_id=0, box=BoundingBox(0, 0, 2, 2))
        assert mask_of(g) == {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_zero_area_box_gives_empty_mask(self):
        g = GroundTruthObject(class_id=0, box=BoundingBox(1, 1, 1, 1))
        assert mask_of(g) == frozenset()


class TestTypeInvariants:
    def test_box_rejects_inverted_corners(self):
        with pytest.raises(ValueError):
            BoundingBox(5, 0, 3, 10)

    def test_box_rejects_nan(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, math.nan, 1)

    def test_covariance_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            CornerCovariance(-1.0, 0.0, 1.0)

    def test_covariance_rejects_indefinite(self):
        with pytest.raises(ValueError):
            CornerCovariance(1.0, 2.0, 1.0)

    def test_covariance_accepts_psd(self):
        CornerCovariance(2.0, 1.0, 2.0)
        CornerCovariance.diagonal(5.0, 6.0)

    def test_label_vector_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            LabelVector([0.5, 1.5])
        with pytest.raises(ValueError):
            LabelVector([-0.1, 0.5])

    def test_label_vector_rejects_oversum(self):
        with pytest.raises(ValueError):
            LabelVector([0.7, 0.7])

    def test_label_vector_allows_subnormalized(self):
        lv = LabelVector([0.2, 0.1, 0.0])
        assert lv.max_prob == 0.2
        assert lv.argmax == 0

    def test_label_argmax_tie_breaks_low(self):
        assert LabelVector([0.3, 0.3, 0.1]).argmax == 0

    def test_detection_raw_score_is_max_label(self):
        d = Detection(
            pbox=ProbabilisticBox.crisp(BoundingBox(0, 0, 1, 1)),
            labels=LabelVector([0.1, 0.6, 0.2]),
        )
        assert d.raw_score == 0.6

    def test_mask_outside_box_rejected(self):
        with pytest.raises(ValueError):
            GroundTruthObject(class_id=0, box=BoundingBox(0, 0, 2, 2),
                              mask=frozenset({(5, 5)}))

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            GroundTruthObject(class_id=0, box=BoundingBox(0, 0, 2, 2), mask=frozenset())

    def test_frame_rejects_out_of_bounds_box(self):
        d = Detection(
            pbox=ProbabilisticBox.crisp(BoundingBox(0, 0, 20, 20)),
            labels=LabelVector([1.0]),
        )
        with pytest.raises(ValueError):
            Frame(frame_id=0, image_width=10, image_height=10, detections=(d,))
