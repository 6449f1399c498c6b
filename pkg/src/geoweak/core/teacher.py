"""教师阶段模拟：把点标注图像变成伪框标注图像，并与强标注图像合并成学生训练语料

噪声作用在隐藏的真实框上，用可调参数模拟不同质量的点到框回归器。
真实教师在外部训练时，可以用 pseudo_from_predictions 接入它的预测文件。
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List

import numpy as np

from ..errors import ConsistencyError
from .geometry import box_center, clamp, contains
from .models import (
    Annotation, BBox, Dataset, Detection, ImageRecord, PixelPoint, Provenance, PseudoAnnotation,
)
from .splitter import WeakSource

logger = logging.getLogger(__name__)

EDGE_MARGIN = 1e-6


@dataclass(frozen=True)
class NoiseModel:
    """教师噪声模型

    Attributes:
        center_jitter_sigma: 中心抖动标准差，按真实框对角线长度的比例
        scale_jitter_sigma: 宽高的对数尺度标准差
        drop_rate: 某个点不产生伪框的概率
        score_alpha, score_beta: 置信度的 Beta 分布参数
    """
    center_jitter_sigma: float = 0.0
    scale_jitter_sigma: float = 0.0
    drop_rate: float = 0.0
    score_alpha: float = 5.0
    score_beta: float = 2.0

    def __post_init__(self):
        if self.center_jitter_sigma < 0 or self.scale_jitter_sigma < 0:
            raise ValueError("噪声标准差不能为负")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError(f"drop_rate 必须位于 [0,1]: {self.drop_rate}")
        if self.score_alpha <= 0 or self.score_beta <= 0:
            raise ValueError("Beta 分布参数必须为正")


def _generating_point(ann: Annotation, source: WeakSource) -> PixelPoint:
    if source == WeakSource.SOURCE_POINT:
        if ann.source_pixel is None:
            raise ConsistencyError(f"标注 {ann.id} 没有像素投影的来源点")
        return ann.source_pixel
    return box_center(ann.box)


def _jitter_box(truth: BBox, point: PixelPoint, draws: np.ndarray,
                noise: NoiseModel) -> BBox:
    """对真实框施加抖动，再做最小平移使其包含生成点

    draws 依次为 x/y 中心偏移与宽/高尺度的标准正态样本。
    零噪声时结果与真实框逐位相同。
    """
    diag = truth.diagonal
    dx = noise.center_jitter_sigma * diag * draws[0]
    dy = noise.center_jitter_sigma * diag * draws[1]
    sw = math.exp(noise.scale_jitter_sigma * draws[2])
    sh = math.exp(noise.scale_jitter_sigma * draws[3])
    grow_w = (sw - 1.0) * truth.width / 2
    grow_h = (sh - 1.0) * truth.height / 2

    xmin, xmax = _contain_axis(truth.xmin + dx - grow_w, truth.xmax + dx + grow_w, point.x)
    ymin, ymax = _contain_axis(truth.ymin + dy - grow_h, truth.ymax + dy + grow_h, point.y)
    return BBox(xmin, ymin, xmax, ymax)


def _contain_axis(lo: float, hi: float, p: float):
    """沿一个轴最小平移区间使其包含 p

    平移后 p 与边界之间留 EDGE_MARGIN 倍区间长度的余量，框经 [x, y, w, h] 写出再读回后仍包含 p。
    """
    span = hi - lo
    margin = EDGE_MARGIN * span
    if p < lo:
        return p - margin, p - margin + span
    if p > hi:
        return p + margin - span, p + margin
    return lo, hi


def simulate_pseudo_labels(
    weak: Dataset,
    noise: NoiseModel,
    seed: int = 0,
    source: WeakSource = WeakSource.BOX_CENTER,
) -> Dataset:
    """对每个弱标注点生成一个伪框（或按 drop_rate 丢弃）

    weak 中的图像保留隐藏的真实框；每张图像使用 (seed, image_id) 派生的独立随机流，
    每个点无论是否被丢弃都消耗同样数量的随机数，因此相同种子下不同噪声参数的结果是成对可比的。
    """
    images: List[ImageRecord] = []
    for img in weak.images:
        rng = np.random.default_rng([seed, img.image_id])
        pseudo: List[Annotation] = []
        for ann in sorted(img.boxes(), key=lambda a: a.id):
            u = rng.random()
            draws = rng.standard_normal(4)
            score = float(rng.beta(noise.score_alpha, noise.score_beta))
            if u < noise.drop_rate:
                continue

            point = _generating_point(ann, source)
            box = clamp(_jitter_box(ann.box, point, draws, noise), img.width, img.height)
            if not box.is_valid() or not contains(box, point):
                logger.debug("图像 %s 标注 %s 的伪框裁剪后退化，丢弃", img.image_id, ann.id)
                continue
            pseudo.append(PseudoAnnotation(
                id=ann.id,
                class_id=ann.class_id,
                box=box,
                source_geo=ann.source_geo,
                source_pixel=point,
                score=score,
            ))
        images.append(img.with_annotations(pseudo))
    return weak.with_images(images)


def pseudo_from_predictions(
    weak: Dataset,
    detections: Iterable[Detection],
    source: WeakSource = WeakSource.BOX_CENTER,
) -> Dataset:
    """用外部教师的预测代替模拟：每个点取同类别、包含该点且置信度最高的预测框

    weak 中的标注可以是点（直接使用）或框（按 source 取生成点）。
    每个预测框最多分配给一个点。
    """
    by_image: Dict[int, List[Detection]] = {}
    for det in detections:
        by_image.setdefault(det.image_id, []).append(det)

    images = []
    for img in weak.images:
        candidates = sorted(
            by_image.get(img.image_id, []),
            key=lambda d: (-d.score, d.det_id if d.det_id is not None else 0),
        )
        used = set()
        pseudo = []
        for ann in sorted(img.annotations, key=lambda a: a.id):
            point = ann.point if ann.is_point else _generating_point(ann, source)
            for k, det in enumerate(candidates):
                if k in used or det.class_id != ann.class_id or not contains(det.box, point):
                    continue
                box = clamp(det.box, img.width, img.height)
                if not box.is_valid() or not contains(box, point):
                    continue
                used.add(k)
                pseudo.append(PseudoAnnotation(
                    id=ann.id, class_id=ann.class_id, box=box,
                    source_geo=ann.source_geo, source_pixel=point, score=det.score,
                ))
                break
        images.append(img.with_annotations(pseudo))
    return weak.with_images(images)


def merge_strong_and_pseudo(strong: Dataset, pseudo: Dataset) -> Dataset:
    """合并强标注与伪标注图像，重新分配全局唯一的标注 id（按图像 id 与原标注 id 排序）"""
    if strong.class_table != pseudo.class_table:
        raise ConsistencyError("强标注与伪标注数据集的类别表不一致")
    overlap = sorted(set(strong.image_ids) & set(pseudo.image_ids))
    if overlap:
        raise ConsistencyError(f"强标注与伪标注图像 id 重叠: {overlap[:10]}")

    merged = sorted(list(strong.images) + list(pseudo.images), key=lambda i: i.image_id)
    next_id = 1
    images = []
    for img in merged:
        annotations = []
        for ann in sorted(img.annotations, key=lambda a: a.id):
            annotations.append(_with_id(ann, next_id))
            next_id += 1
        images.append(img.with_annotations(annotations))
    return Dataset(class_table=strong.class_table, images=tuple(images))


def _with_id(ann: Annotation, new_id: int) -> Annotation:
    cls = PseudoAnnotation if ann.is_pseudo else Annotation
    return cls(
        id=new_id, class_id=ann.class_id, box=ann.box, point=ann.point,
        source_geo=ann.source_geo, source_pixel=ann.source_pixel,
        score=ann.score, provenance=ann.provenance,
    )


def to_detections(d: Dataset, default_score: float = 1.0) -> List[Detection]:
    """把数据集中的框标注转换为检测结果（无置信度的强标注取 default_score）"""
    detections = []
    for img, ann in d.annotations():
        if not ann.is_box:
            continue
        score = ann.score if ann.score is not None else default_score
        detections.append(Detection(
            image_id=img.image_id, class_id=ann.class_id, box=ann.box,
            score=score, det_id=len(detections),
        ))
    return detections


def provenance_counts(d: Dataset) -> Dict[str, int]:
    counts = {p.value: 0 for p in Provenance}
    for _, ann in d.annotations():
        counts[ann.provenance.value] += 1
    return counts
