"""语料级校验：违规作为数据返回，不抛异常"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

from .models import Dataset


class ViolationKind(Enum):
    """违规类型"""
    INVALID_CLASS_TABLE = "invalid-class-table"
    DUPLICATE_ID = "duplicate-id"
    DUPLICATE_ANNOTATION_ID = "duplicate-annotation-id"
    INVALID_SIZE = "invalid-size"
    UNKNOWN_CLASS = "unknown-class"
    NON_FINITE = "non-finite"
    DEGENERATE_BOX = "degenerate-box"
    OUT_OF_BOUNDS = "out-of-bounds"
    INVALID_GEO = "invalid-geo"
    INVALID_SCORE = "invalid-score"
    PSEUDO_CONTAINMENT = "pseudo-containment"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    message: str
    image_id: Optional[int] = None
    annotation_id: Optional[int] = None


@dataclass
class ValidationReport:
    """校验结果"""
    images: int = 0
    boxes: int = 0
    points: int = 0
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: ViolationKind, message: str, image_id: int = None,
            annotation_id: int = None):
        self.violations.append(Violation(kind, message, image_id, annotation_id))

    def by_kind(self) -> Dict[ViolationKind, int]:
        counts: Dict[ViolationKind, int] = {}
        for v in self.violations:
            counts[v.kind] = counts.get(v.kind, 0) + 1
        return counts


def validate_dataset(d: Dataset) -> ValidationReport:
    """检查数据集的全部不变量，不修改输入"""
    report = ValidationReport()
    counts = d.counts()
    report.images = counts["images"]
    report.boxes = counts["boxes"]
    report.points = counts["points"]

    for problem in d.class_table.problems():
        report.add(ViolationKind.INVALID_CLASS_TABLE, problem)

    seen_images = set()
    seen_annotations = set()
    for img in d.images:
        if img.image_id in seen_images:
            report.add(ViolationKind.DUPLICATE_ID, f"图像 id {img.image_id} 重复", img.image_id)
        seen_images.add(img.image_id)

        if img.width <= 0 or img.height <= 0:
            report.add(ViolationKind.INVALID_SIZE,
                       f"图像 {img.image_id} 尺寸非法: {img.width}x{img.height}", img.image_id)

        if img.centroid_geo is not None and not img.centroid_geo.is_valid():
            report.add(ViolationKind.INVALID_GEO, f"图像 {img.image_id} 经纬度越界", img.image_id)

        for ann in img.annotations:
            _check_annotation(report, d, img, ann, seen_annotations)

    return report


def _check_annotation(report, d, img, ann, seen_annotations):
    """检查单个标注"""
    if ann.id in seen_annotations:
        report.add(ViolationKind.DUPLICATE_ANNOTATION_ID,
                   f"标注 id {ann.id} 重复", img.image_id, ann.id)
    seen_annotations.add(ann.id)

    if ann.class_id not in d.class_table:
        report.add(ViolationKind.UNKNOWN_CLASS,
                   f"标注 {ann.id} 的类别 {ann.class_id} 不在类别表中", img.image_id, ann.id)

    if ann.source_geo is not None and not ann.source_geo.is_valid():
        report.add(ViolationKind.INVALID_GEO, f"标注 {ann.id} 经纬度越界", img.image_id, ann.id)

    if ann.score is not None and not 0.0 <= ann.score <= 1.0:
        report.add(ViolationKind.INVALID_SCORE, f"标注 {ann.id} 的置信度不在 [0,1]",
                   img.image_id, ann.id)

    if ann.is_point:
        if not ann.point.is_finite():
            report.add(ViolationKind.NON_FINITE, f"标注 {ann.id} 的点坐标非有限值",
                       img.image_id, ann.id)
        return

    box = ann.box
    if not box.is_finite():
        report.add(ViolationKind.NON_FINITE, f"标注 {ann.id} 的框坐标非有限值", img.image_id, ann.id)
        return
    if not box.is_valid():
        report.add(ViolationKind.DEGENERATE_BOX, f"标注 {ann.id} 的框面积为零或为负",
                   img.image_id, ann.id)
        return
    if box.xmin < 0 or box.ymin < 0 or box.xmax > img.width or box.ymax > img.height:
        report.add(ViolationKind.OUT_OF_BOUNDS, f"标注 {ann.id} 的框超出图像范围",
                   img.image_id, ann.id)

    if ann.is_pseudo and ann.source_pixel is not None:
        p = ann.source_pixel
        if not (box.xmin <= p.x <= box.xmax and box.ymin <= p.y <= box.ymax):
            report.add(ViolationKind.PSEUDO_CONTAINMENT, f"伪标注 {ann.id} 不包含其生成点",
                       img.image_id, ann.id)
