"""防泄漏的数据划分、强/弱标注比例采样、弱标签生成与保留过滤"""
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConsistencyError, SplitError
from .geometry import box_center, contains
from .models import (
    Annotation, Dataset, ImageRecord, LabelMode, PixelPoint, Split,
)

logger = logging.getLogger(__name__)

DEFAULT_MERIDIAN = -98.58


class WeakSource(Enum):
    """弱标签点的来源"""
    BOX_CENTER = "box_center"
    SOURCE_POINT = "source_point"


@dataclass(frozen=True)
class SplitAssignment:
    """image_id -> 划分；relocated_clusters 记录被整体移动的跨划分簇"""
    mapping: Mapping[int, Split]
    relocated_clusters: Tuple[int, ...] = ()

    def __getitem__(self, image_id: int) -> Split:
        return self.mapping[image_id]

    def __len__(self) -> int:
        return len(self.mapping)

    def ids_in(self, split: Split) -> List[int]:
        return sorted(i for i, s in self.mapping.items() if s == split)

    def counts(self) -> Dict[Split, int]:
        counter = Counter(self.mapping.values())
        return {s: counter.get(s, 0) for s in Split}


@dataclass(frozen=True)
class LabelModeAssignment:
    """训练集图像 -> 强/弱"""
    mapping: Mapping[int, LabelMode]

    def __getitem__(self, image_id: int) -> LabelMode:
        return self.mapping[image_id]

    def __len__(self) -> int:
        return len(self.mapping)

    @property
    def strong_ids(self) -> List[int]:
        return sorted(i for i, m in self.mapping.items() if m == LabelMode.STRONG)

    @property
    def weak_ids(self) -> List[int]:
        return sorted(i for i, m in self.mapping.items() if m == LabelMode.WEAK)


@dataclass(frozen=True)
class RegionRule:
    """区域规则

    countries 为 None 表示 rest 规则（匹配任何图像）；经度区间为左闭右开 [lon_min, lon_max)。
    """
    split: Split
    countries: Optional[FrozenSet[str]] = None
    lon_min: Optional[float] = None
    lon_max: Optional[float] = None

    @property
    def is_rest(self) -> bool:
        return self.countries is None

    @property
    def needs_longitude(self) -> bool:
        return self.lon_min is not None or self.lon_max is not None

    def matches(self, country: str, lon: Optional[float]) -> bool:
        if self.countries is not None and country not in self.countries:
            return False
        if self.needs_longitude:
            if lon is None:
                raise SplitError(f"规则 {self.split.value} 需要经度，但图像缺少经纬度")
            if self.lon_min is not None and lon < self.lon_min:
                return False
            if self.lon_max is not None and lon >= self.lon_max:
                return False
        return True

    def _interval(self) -> Tuple[float, float]:
        lo = -math.inf if self.lon_min is None else self.lon_min
        hi = math.inf if self.lon_max is None else self.lon_max
        return lo, hi


def default_region_rules(meridian: float = DEFAULT_MERIDIAN) -> List[RegionRule]:
    """国家划分：美国西部训练、东部验证，中国与西班牙用于教师评估，其余国家测试"""
    us = frozenset({"US"})
    return [
        RegionRule(Split.TRAIN, us, lon_max=meridian),
        RegionRule(Split.VAL, us, lon_min=meridian),
        RegionRule(Split.TEACHER_EVAL, frozenset({"CN", "ES"})),
        RegionRule(Split.TEST),
    ]


def check_rules_disjoint(rules: Sequence[RegionRule]) -> None:
    """非 rest 规则之间不能在同一国家上有重叠的经度区间"""
    specific = [r for r in rules if not r.is_rest]
    for i, a in enumerate(specific):
        for b in specific[i + 1:]:
            shared = a.countries & b.countries
            if not shared:
                continue
            (alo, ahi), (blo, bhi) = a._interval(), b._interval()
            if alo < bhi and blo < ahi:
                raise SplitError(
                    f"区域规则重叠: {a.split.value} 与 {b.split.value} 在 {sorted(shared)}"
                )


def split_random_by_cluster(
    d: Dataset,
    ratios: Sequence[float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """按簇随机划分 train/val/test

    簇被打乱后逐个分配给当前离目标图像数最远（差额最大）的划分，
    同一簇的图像总在同一划分中。
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise SplitError(f"划分比例必须是 3 个正数: {list(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"划分比例之和必须为 1: {list(ratios)}")

    clusters = _group_by_cluster(d)
    splits = [Split.TRAIN, Split.VAL, Split.TEST]
    if len(clusters) < len(splits):
        raise SplitError(f"簇数量 ({len(clusters)}) 少于划分数量 ({len(splits)})")

    cluster_ids = sorted(clusters)
    order = np.random.default_rng(seed).permutation(len(cluster_ids))
    total = len(d.images)
    targets = [r * total for r in ratios]
    filled = [0, 0, 0]
    mapping: Dict[int, Split] = {}

    for idx in order:
        cid = cluster_ids[idx]
        deficits = [t - f for t, f in zip(targets, filled)]
        # 差额相同取靠前的划分
        best = max(range(3), key=lambda k: (deficits[k], -k))
        filled[best] += len(clusters[cid])
        for image_id in clusters[cid]:
            mapping[image_id] = splits[best]

    logger.info("按簇划分: %d 个簇, train/val/test = %s", len(cluster_ids), filled)
    return SplitAssignment(mapping=mapping)


def _group_by_cluster(d: Dataset) -> Dict[int, List[int]]:
    clusters: Dict[int, List[int]] = defaultdict(list)
    for img in d.images:
        if img.cluster_id is None:
            raise SplitError(f"图像 {img.image_id} 没有 cluster_id，请先聚类")
        clusters[img.cluster_id].append(img.image_id)
    return dict(clusters)


def split_by_region(d: Dataset, rules: Sequence[RegionRule]) -> SplitAssignment:
    """按国家/经度规则划分，按顺序取第一条匹配的规则

    随后检查泄漏：跨划分的簇整体移到其多数划分（平票取划分顺序靠前者）。
    """
    check_rules_disjoint(rules)
    mapping: Dict[int, Split] = {}
    for img in d.images:
        if not img.country:
            raise SplitError(f"图像 {img.image_id} 缺少国家信息")
        lon = img.centroid_geo.lon if img.centroid_geo is not None else None
        rule = next((r for r in rules if r.matches(img.country, lon)), None)
        if rule is None:
            raise SplitError(f"图像 {img.image_id} ({img.country}) 没有匹配的区域规则")
        mapping[img.image_id] = rule.split

    relocated = _fix_leakage(d, mapping)
    return SplitAssignment(mapping=mapping, relocated_clusters=tuple(relocated))


def _fix_leakage(d: Dataset, mapping: Dict[int, Split]) -> List[int]:
    """把跨划分的簇整体移到多数划分，返回被移动的簇 id"""
    members: Dict[int, List[int]] = defaultdict(list)
    for img in d.images:
        if img.cluster_id is not None:
            members[img.cluster_id].append(img.image_id)

    relocated = []
    for cid in sorted(members):
        votes = Counter(mapping[i] for i in members[cid])
        if len(votes) < 2:
            continue
        majority = max(votes, key=lambda s: (votes[s], -s.sort_order()))
        for image_id in members[cid]:
            mapping[image_id] = majority
        relocated.append(cid)
        logger.warning("簇 %s 跨越划分 %s，整体移到 %s",
                       cid, {s.value: n for s, n in votes.items()}, majority.value)
    return relocated


def round_half_away(x: float) -> int:
    """四舍五入（远离零）"""
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def sample_label_fractions(
    d: Dataset,
    split: SplitAssignment,
    fraction: float,
    seed: int = 0,
    stratify: bool = True,
) -> LabelModeAssignment:
    """在训练集上采样强标注图像，其余为弱标注

    强标注数量 = round(fraction × |train|)。多类别数据在 stratify 时先保证
    每个在训练集出现过的类别至少落入一张强标注图像（由少到多依次覆盖），再随机补足。
    """
    if not 0 < fraction <= 1:
        raise SplitError(f"fraction 必须位于 (0, 1]: {fraction}")
    train_ids = split.ids_in(Split.TRAIN)
    if not train_ids:
        raise SplitError("训练集为空")
    n_strong = round_half_away(fraction * len(train_ids))
    if n_strong == 0:
        raise SplitError(f"fraction={fraction} 在 {len(train_ids)} 张训练图像上得到 0 张强标注图像")

    rng = np.random.default_rng(seed)
    shuffled = [train_ids[i] for i in rng.permutation(len(train_ids))]
    chosen: List[int] = []

    if stratify and len(d.class_table) > 1:
        chosen = _cover_classes(d, shuffled, n_strong)

    picked = set(chosen)
    for image_id in shuffled:
        if len(chosen) >= n_strong:
            break
        if image_id not in picked:
            chosen.append(image_id)
            picked.add(image_id)

    mapping = {i: (LabelMode.STRONG if i in picked else LabelMode.WEAK) for i in train_ids}
    return LabelModeAssignment(mapping=mapping)


def _cover_classes(d: Dataset, shuffled: List[int], budget: int) -> List[int]:
    """为每个训练集中出现的类别挑一张图像（稀有类别优先）"""
    classes_of = {}
    frequency: Counter = Counter()
    for image_id in shuffled:
        classes = {a.class_id for a in d.image_by_id(image_id).annotations}
        classes_of[image_id] = classes
        frequency.update(classes)

    chosen: List[int] = []
    covered = set()
    for class_id in sorted(frequency, key=lambda c: (frequency[c], c)):
        if len(chosen) >= budget:
            break
        if class_id in covered:
            continue
        image_id = next(i for i in shuffled if class_id in classes_of[i])
        chosen.append(image_id)
        covered |= classes_of[image_id]
    return chosen


def derive_weak_labels(
    d: Dataset,
    modes: LabelModeAssignment,
    source: WeakSource = WeakSource.BOX_CENTER,
) -> Dataset:
    """把弱标注图像的每个框换成一个点标注，强标注图像保持不变"""
    images = []
    for img in d.images:
        if modes.mapping.get(img.image_id) != LabelMode.WEAK:
            images.append(img)
            continue
        images.append(img.with_annotations(_to_point(a, source) for a in img.annotations))
    return d.with_images(images)


def _to_point(ann: Annotation, source: WeakSource) -> Annotation:
    if ann.is_point:
        return ann
    if source == WeakSource.BOX_CENTER:
        point = box_center(ann.box)
    else:
        if ann.source_pixel is None:
            raise ConsistencyError(f"标注 {ann.id} 没有像素投影的来源点")
        point = ann.source_pixel
    return Annotation(
        id=ann.id,
        class_id=ann.class_id,
        point=point,
        source_geo=ann.source_geo,
        source_pixel=ann.source_pixel,
    )


@dataclass
class RetentionReport:
    """保留过滤报告"""
    kept_images: int = 0
    dropped_images: int = 0
    dropped_points: int = 0
    dropped_image_ids: List[int] = field(default_factory=list)


def retention_filter(d: Dataset) -> Tuple[Dataset, RetentionReport]:
    """保留至少有一个 (框, 点) 包含对的图像，并删除不被任何框包含的点

    点取图像中的点标注；无标注的负样本图像原样保留。
    """
    report = RetentionReport()
    images: List[ImageRecord] = []
    for img in d.images:
        if not img.is_positive:
            images.append(img)
            report.kept_images += 1
            continue
        boxes = [a.box for a in img.boxes()]
        points = img.points()
        matched = [p for p in points if any(contains(b, p.point) for b in boxes)]
        if not matched:
            report.dropped_images += 1
            report.dropped_image_ids.append(img.image_id)
            continue
        report.kept_images += 1
        report.dropped_points += len(points) - len(matched)
        matched_ids = {p.id for p in matched}
        images.append(img.with_annotations(
            a for a in img.annotations if a.is_box or a.id in matched_ids
        ))

    logger.info("保留过滤: 保留 %d 张, 丢弃 %d 张图像, 丢弃 %d 个孤立点",
                report.kept_images, report.dropped_images, report.dropped_points)
    return d.with_images(images), report


def attach_source_points(d: Dataset) -> Dataset:
    """把被框包含的点标注并入框的 source_pixel/source_geo，并删除这些点标注

    点按 id 升序分配给第一个包含它且尚未分配点的框（框也按 id 升序）。
    """
    images = []
    for img in d.images:
        boxes = sorted(img.boxes(), key=lambda a: a.id)
        points = sorted(img.points(), key=lambda a: a.id)
        attached: Dict[int, Annotation] = {}
        used = set()
        for p in points:
            target = next((b for b in boxes
                           if b.id not in attached and contains(b.box, p.point)), None)
            if target is None:
                continue
            attached[target.id] = p
            used.add(p.id)

        annotations = []
        for a in img.annotations:
            if a.id in used:
                continue
            if a.id in attached:
                p = attached[a.id]
                a = Annotation(
                    id=a.id, class_id=a.class_id, box=a.box,
                    source_geo=p.source_geo or a.source_geo,
                    source_pixel=PixelPoint(p.point.x, p.point.y),
                    score=a.score, provenance=a.provenance,
                )
            annotations.append(a)
        images.append(img.with_annotations(annotations))
    return d.with_images(images)


def split_summary(d: Dataset, split: SplitAssignment) -> Dict[Split, Dict[str, int]]:
    """每个划分的图像数与正样本图像数"""
    summary = {s: {"images": 0, "positive": 0} for s in Split}
    for img in d.images:
        s = split.mapping.get(img.image_id)
        if s is None:
            continue
        summary[s]["images"] += 1
        if img.is_positive:
            summary[s]["positive"] += 1
    return summary


def check_split_consistency(d: Dataset, split: SplitAssignment,
                            modes: Optional[LabelModeAssignment] = None) -> None:
    """清单只能引用数据集中存在的图像；标注方式只能定义在训练集图像上"""
    known = set(d.image_ids)
    unknown = sorted(set(split.mapping) - known)
    if unknown:
        raise ConsistencyError(f"划分清单引用了不存在的图像: {unknown[:10]}")
    if modes is None:
        return
    unknown = sorted(set(modes.mapping) - known)
    if unknown:
        raise ConsistencyError(f"标注方式清单引用了不存在的图像: {unknown[:10]}")
    not_train = sorted(i for i in modes.mapping if split.mapping.get(i) != Split.TRAIN)
    if not_train:
        raise ConsistencyError(f"标注方式清单包含非训练集图像: {not_train[:10]}")

