"""像素空间的框运算：IoU、最小外接矩形、中心点、包含关系"""
from typing import Iterable

from ..errors import GeometryError
from .models import BBox, OrientedBox, PixelPoint


def iou(a: BBox, b: BBox) -> float:
    """交并比；不相交或交集面积为零时精确返回 0"""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def mbr(o: OrientedBox) -> BBox:
    """有向框的最小轴对齐外接矩形

    Raises:
        GeometryError: 四个角点共线（外接区域面积为零）
    """
    xs = [c.x for c in o.corners]
    ys = [c.y for c in o.corners]
    if _collinear(o.corners):
        raise GeometryError("有向框的角点共线，面积为零")
    box = BBox(min(xs), min(ys), max(xs), max(ys))
    if not box.is_valid():
        raise GeometryError(f"有向框的外接矩形退化: {box}")
    return box


def _collinear(points: Iterable[PixelPoint]) -> bool:
    """所有点是否落在同一条直线上（叉积全为零）"""
    pts = list(points)
    origin = pts[0]
    # 找到第一个与 origin 不重合的点作为方向
    direction = next((p for p in pts[1:] if (p.x, p.y) != (origin.x, origin.y)), None)
    if direction is None:
        return True
    dx, dy = direction.x - origin.x, direction.y - origin.y
    return all((p.x - origin.x) * dy - (p.y - origin.y) * dx == 0 for p in pts)


def box_center(b: BBox) -> PixelPoint:
    return PixelPoint((b.xmin + b.xmax) / 2, (b.ymin + b.ymax) / 2)


def contains(b: BBox, p: PixelPoint) -> bool:
    """点是否在框内（边界包含在内）"""
    return b.xmin <= p.x <= b.xmax and b.ymin <= p.y <= b.ymax


def clamp(b: BBox, width: float, height: float) -> BBox:
    """把框裁剪到 [0,width]x[0,height]，结果可能退化"""
    return BBox(
        max(0.0, min(b.xmin, width)),
        max(0.0, min(b.ymin, height)),
        max(0.0, min(b.xmax, width)),
        max(0.0, min(b.ymax, height)),
    )
