import pytest

from plgkit.boxes import BBox, Detection, iou


def test_bbox_geometry():
    b = BBox(10, 20, 30, 40)
    assert (b.cx, b.cy) == (25, 40)
    assert (b.x2, b.y2) == (40, 60)
    assert b.area() == 1200
    assert BBox.from_center(25, 40, 30, 40) == b


def test_bbox_rejects_nonpositive_size():
    with pytest.raises(ValueError):
        BBox(0, 0, 0, 10)
    with pytest.raises(ValueError):
        BBox(0, 0, 10, -1)


def test_contains_half_open():
    b = BBox(0, 0, 10, 10)
    assert b.contains(0, 0)
    assert b.contains(9.9, 9.9)
    assert not b.contains(10, 5)


def test_iou_identical_and_disjoint():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(20, 20, 10, 10)) == 0.0


def test_iou_half_overlap():
    a = BBox(0, 0, 10, 10)
    b = BBox(5, 0, 10, 10)
    # intersection 50, union 150
    assert iou(a, b) == pytest.approx(1 / 3)


def test_clamp_shifts_without_resize():
    b = BBox(-5, 90, 20, 20)
    clamped, truncated = b.clamp(100, 100)
    assert not truncated
    assert (clamped.x, clamped.y, clamped.w, clamped.h) == (0, 80, 20, 20)


def test_clamp_crops_oversized():
    b = BBox(-10, -10, 300, 50)
    clamped, truncated = b.clamp(100, 100)
    assert truncated
    assert (clamped.x, clamped.w) == (0, 100)
    assert clamped.h == 50


def test_clamp_rejects_disjoint_box():
    with pytest.raises(ValueError):
        BBox(200, 200, 10, 10).clamp(100, 100)


def test_detection_confidence_range():
    Detection(0, BBox(0, 0, 1, 1), 0.5)
    with pytest.raises(ValueError):
        Detection(0, BBox(0, 0, 1, 1), 1.5)
