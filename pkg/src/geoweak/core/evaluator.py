"""检测评估：按置信度贪心匹配，逐类别逐 IoU 阈值计算 AP 与 mAP

AP 为单调化精度包络线下的精确面积（非 101 点采样）。同分检测按 det_id 升序排列，
因此打乱输入顺序不改变结果。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from ..errors import ConsistencyError
from .geometry import iou
from .models import BBox, Dataset, Detection

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class EvalConfig:
    """评估配置：IoU 阈值位于 (0,1] 且严格递增"""
    iou_thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "iou_thresholds", tuple(float(t) for t in self.iou_thresholds))
        ts = self.iou_thresholds
        if not ts:
            raise ValueError("至少需要一个 IoU 阈值")
        if any(not 0 < t <= 1 for t in ts):
            raise ValueError(f"IoU 阈值必须位于 (0,1]: {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"IoU 阈值必须严格递增: {ts}")


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int


@dataclass
class EvalResult:
    """评估结果

    ap[(class_id, threshold)]、counts[(class_id, threshold)] 只包含有真值的类别；
    mean_ap[threshold] 为这些类别 AP 的非加权平均。
    """
    thresholds: Tuple[float, ...]
    class_names: Dict[int, str]
    ap: Dict[Tuple[int, float], float] = field(default_factory=dict)
    counts: Dict[Tuple[int, float], MatchCounts] = field(default_factory=dict)
    mean_ap: Dict[float, float] = field(default_factory=dict)
    single_class: bool = False

    @property
    def metric_name(self) -> str:
        return "AP" if self.single_class else "mAP"

    @property
    def classes(self) -> List[int]:
        return sorted({c for c, _ in self.ap})

    def to_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "thresholds": list(self.thresholds),
            "mean_ap": {_key(t): self.mean_ap[t] for t in self.thresholds},
            "per_class": [
                {
                    "class_id": c,
                    "class_name": self.class_names.get(c, str(c)),
                    "ap": {_key(t): self.ap[(c, t)] for t in self.thresholds},
                    "tp": {_key(t): self.counts[(c, t)].tp for t in self.thresholds},
                    "fp": {_key(t): self.counts[(c, t)].fp for t in self.thresholds},
                    "fn": {_key(t): self.counts[(c, t)].fn for t in self.thresholds},
                }
                for c in self.classes
            ],
        }

    def summary_rows(self) -> List[dict]:
        """CSV 摘要行：逐阈值逐类别，外加每个阈值一行 mAP"""
        rows = []
        for t in self.thresholds:
            for c in self.classes:
                m = self.counts[(c, t)]
                rows.append({
                    "threshold": t, "class_id": c,
                    "class_name": self.class_names.get(c, str(c)),
                    "ap": self.ap[(c, t)], "tp": m.tp, "fp": m.fp, "fn": m.fn,
                })
            rows.append({
                "threshold": t, "class_id": "", "class_name": self.metric_name,
                "ap": self.mean_ap[t], "tp": "", "fp": "", "fn": "",
            })
        return rows


def _key(t: float) -> str:
    return f"{t:g}"


def match_detections(
    dets: Sequence[Detection], gts: Sequence[BBox], threshold: float
) -> List[bool]:
    """单张图像单个类别内的贪心匹配

    dets 需已按置信度降序（同分按 det_id 升序）排好。每个检测匹配 IoU 最高的
    尚未匹配的真值框（IoU 相同取下标较小者），IoU >= 阈值记为 TP，否则为 FP。
    """
    matched = [False] * len(gts)
    flags = []
    for det in dets:
        best, best_iou = -1, -1.0
        for k, gt in enumerate(gts):
            if matched[k]:
                continue
            overlap = iou(det.box, gt)
            if overlap > best_iou:
                best, best_iou = k, overlap
        if best >= 0 and best_iou >= threshold:
            matched[best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags: Sequence[bool], gt_count: int) -> float:
    """按置信度顺序的 TP/FP 标记计算 AP

    精度包络从右向左取单调不增，AP 为包络在召回率 [0,1] 上的精确面积。
    gt_count 为 0 时返回 0（调用方应将该类别排除在 mAP 之外）。
    """
    if gt_count <= 0 or len(flags) == 0:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=float))
    fp = np.cumsum(1.0 - np.asarray(flags, dtype=float))
    recall = tp / gt_count
    precision = tp / (tp + fp)

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def sort_detections(dets: Iterable[Detection]) -> List[Detection]:
    """按置信度降序、det_id 升序排序；缺失 det_id 时使用输入位置"""
    indexed = [(d.det_id if d.det_id is not None else i, d) for i, d in enumerate(dets)]
    indexed.sort(key=lambda pair: (-pair[1].score, pair[0]))
    return [d for _, d in indexed]


def evaluate(preds: Sequence[Detection], gt: Dataset,
             cfg: EvalConfig = EvalConfig()) -> EvalResult:
    """在数据集真值上评估预测

    每个类别、每个阈值：检测在全体图像上按置信度统一排序，逐个在所属图像内贪心匹配，
    汇总标记后计算 AP。只有框标注参与评估。

    Raises:
        ConsistencyError: 预测引用了不存在的图像或类别
    """
    known_images = set(gt.image_ids)
    for det in preds:
        if det.image_id not in known_images:
            raise ConsistencyError(f"预测引用了不存在的图像 {det.image_id}")
        if det.class_id not in gt.class_table:
            raise ConsistencyError(f"预测引用了不存在的类别 {det.class_id}")

    gt_boxes: Dict[Tuple[int, int], List[BBox]] = {}
    for img, ann in gt.annotations():
        if ann.is_box:
            gt_boxes.setdefault((ann.class_id, img.image_id), []).append(ann.box)
    gt_count: Dict[int, int] = {}
    for (class_id, _), boxes in gt_boxes.items():
        gt_count[class_id] = gt_count.get(class_id, 0) + len(boxes)

    ordered = sort_detections(preds)
    by_class: Dict[int, List[Detection]] = {}
    for det in ordered:
        by_class.setdefault(det.class_id, []).append(det)

    result = EvalResult(
        thresholds=cfg.iou_thresholds,
        class_names={e.class_id: e.name for e in gt.class_table.entries},
        single_class=gt.is_single_class(),
    )
    jobs = [(c, t) for c in sorted(gt_count) for t in cfg.iou_thresholds]

    def run(job):
        class_id, threshold = job
        return job, _evaluate_class(by_class.get(class_id, []), gt_boxes, class_id,
                                    gt_count[class_id], threshold)

    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    for job, (ap, counts) in outcomes:
        result.ap[job] = ap
        result.counts[job] = counts

    for t in cfg.iou_thresholds:
        values = [result.ap[(c, t)] for c in sorted(gt_count)]
        result.mean_ap[t] = float(np.mean(values)) if values else 0.0
    logger.debug("评估完成: %d 个检测, %d 个类别, 阈值 %s",
                 len(ordered), len(gt_count), list(cfg.iou_thresholds))
    return result


def _evaluate_class(dets: List[Detection], gt_boxes, class_id: int, n_gt: int,
                    threshold: float) -> Tuple[float, MatchCounts]:
    """单个类别单个阈值：检测按图像分组匹配，标记按全局顺序汇总"""
    positions: Dict[int, List[int]] = {}
    for pos, det in enumerate(dets):
        positions.setdefault(det.image_id, []).append(pos)

    flags = [False] * len(dets)
    for image_id, idxs in positions.items():
        image_flags = match_detections(
            [dets[i] for i in idxs], gt_boxes.get((class_id, image_id), []), threshold
        )
        for i, flag in zip(idxs, image_flags):
            flags[i] = flag

    tp = sum(flags)
    return average_precision(flags, n_gt), MatchCounts(tp=tp, fp=len(flags) - tp, fn=n_gt - tp)
