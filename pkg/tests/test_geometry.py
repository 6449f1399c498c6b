"""测试框运算"""
import math

import numpy as np
import pytest

from geoweak.core.geometry import box_center, clamp, contains, iou, mbr
from geoweak.core.models import BBox, OrientedBox, PixelPoint
from geoweak.errors import GeometryError


def sorted_corners(rng):
    xs = sorted(rng.choice(20, size=2, replace=False))
    ys = sorted(rng.choice(20, size=2, replace=False))
    return int(xs[0]), int(ys[0]), int(xs[1]), int(ys[1])


def grid_cells(b):
    """整数网格上被框覆盖的单位格"""
    return {(x, y)
            for x in range(int(b.xmin), int(b.xmax))
            for y in range(int(b.ymin), int(b.ymax))}


def random_oriented_box(rng):
    """随机中心、边长与旋转角的矩形，角点按多边形顺序排列"""
    cx, cy = rng.uniform(-500, 500, 2)
    w, h = rng.uniform(1, 200, 2)
    theta = rng.uniform(0, 2 * math.pi)
    cos, sin = math.cos(theta), math.sin(theta)
    coords = []
    for dx, dy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        coords += [cx + dx * cos - dy * sin, cy + dx * sin + dy * cos]
    return OrientedBox.from_flat(coords)


def box_as_oriented(b):
    return OrientedBox.from_flat([b.xmin, b.ymin, b.xmax, b.ymin, b.xmax, b.ymax, b.xmin, b.ymax])


class TestIoU:
    """测试交并比"""

    def test_identical(self):
        assert iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0

    def test_half_overlap(self):
        # 交集 50，并集 150
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_offset_squares(self):
        assert iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) == pytest.approx(1 / 7)

    def test_matches_grid_count(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a = BBox(*sorted_corners(rng))
            b = BBox(*sorted_corners(rng))
            cells_a = grid_cells(a)
            cells_b = grid_cells(b)
            expected = len(cells_a & cells_b) / len(cells_a | cells_b)
            assert iou(a, b) == pytest.approx(expected, abs=1e-12)

    def test_disjoint_is_exactly_zero(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0

    def test_touching_edges_is_zero(self):
        assert iou(BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)) == 0.0

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            x, y = rng.uniform(0, 100, 2)
            w, h = rng.uniform(1, 50, 2)
            a = BBox.from_xywh(x, y, w, h)
            x, y = rng.uniform(0, 100, 2)
            w, h = rng.uniform(1, 50, 2)
            b = BBox.from_xywh(x, y, w, h)
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0


class TestMbr:
    """测试最小外接矩形"""

    def test_axis_aligned_square(self):
        o = OrientedBox.from_flat([10, 10, 20, 10, 20, 20, 10, 20])
        assert mbr(o) == BBox(10, 10, 20, 20)

    def test_rotated_square(self):
        o = OrientedBox.from_flat([5, 0, 10, 5, 5, 10, 0, 5])
        assert mbr(o) == BBox(0, 0, 10, 10)

    def test_unit_square_rotated_45(self):
        h = math.sqrt(2) / 2
        o = OrientedBox.from_flat([0.5, 0.5 - h, 0.5 + h, 0.5, 0.5, 0.5 + h, 0.5 - h, 0.5])
        b = mbr(o)
        expected = (0.5 - h, 0.5 - h, 0.5 + h, 0.5 + h)
        assert (b.xmin, b.ymin, b.xmax, b.ymax) == pytest.approx(expected)

    def test_idempotent_on_own_corners(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            b = mbr(random_oriented_box(rng))
            assert mbr(box_as_oriented(b)) == b

    def test_contains_all_corners(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            o = random_oriented_box(rng)
            b = mbr(o)
            assert all(contains(b, c) for c in o.corners)
            assert min(c.x for c in o.corners) == b.xmin
            assert max(c.y for c in o.corners) == b.ymax

    def test_collinear_corners(self):
        with pytest.raises(GeometryError):
            mbr(OrientedBox.from_flat([0, 0, 1, 1, 2, 2, 3, 3]))

    def test_coincident_corners(self):
        with pytest.raises(GeometryError):
            mbr(OrientedBox.from_flat([1, 1] * 4))


class TestPointOps:
    """测试中心、包含与裁剪"""

    def test_center(self):
        assert box_center(BBox(0, 0, 10, 20)) == PixelPoint(5, 10)

    def test_center_negative_and_fractional(self):
        assert box_center(BBox(-2, -2, 2, 2)) == PixelPoint(0, 0)
        assert box_center(BBox(1, 1, 2, 4)) == PixelPoint(1.5, 2.5)

    def test_contains_boundary(self):
        box = BBox(0, 0, 10, 10)
        assert contains(box, PixelPoint(0, 0))
        assert contains(box, PixelPoint(10, 10))
        assert not contains(box, PixelPoint(10.001, 5))

    def test_clamp(self):
        assert clamp(BBox(-5, -5, 50, 50), 40, 30) == BBox(0, 0, 40, 30)

    def test_clamp_outside_is_degenerate(self):
        assert not clamp(BBox(50, 50, 60, 60), 40, 40).is_valid()
