"""测试检测评估"""
from fractions import Fraction

import numpy as np
import pytest

from geoweak.core.evaluator import (
    EvalConfig, MatchCounts, average_precision, evaluate, match_detections, sort_detections,
)
from geoweak.core.models import Annotation, BBox, ClassTable, Dataset, Detection, ImageRecord
from geoweak.errors import ConsistencyError

THRESHOLDS = (0.25, 0.5, 0.75)


def gt_dataset(boxes_by_image, class_table=None):
    """boxes_by_image: {image_id: [(class_id, BBox), ...]}"""
    images = []
    ann_id = 1
    for image_id in sorted(boxes_by_image):
        anns = []
        for class_id, b in boxes_by_image[image_id]:
            anns.append(Annotation(id=ann_id, class_id=class_id, box=b))
            ann_id += 1
        images.append(ImageRecord(image_id, 1000, 1000, tuple(anns)))
    return Dataset(class_table or ClassTable.single_class(), tuple(images))


def naive_iou(a, b):
    w = max(0.0, min(a.xmax, b.xmax) - max(a.xmin, b.xmin))
    h = max(0.0, min(a.ymax, b.ymax) - max(a.ymin, b.ymin))
    inter = w * h
    if inter == 0:
        return 0.0
    return inter / ((a.xmax - a.xmin) * (a.ymax - a.ymin)
                    + (b.xmax - b.xmin) * (b.ymax - b.ymin) - inter)


def naive_ap(preds, gt, class_id, threshold):
    """参照实现：有理数精度逐个阈值枚举 PR 点，再对包络逐段求面积

    返回 (有理数 AP, tp, fp, fn)。
    """
    gts = {}
    for img, ann in gt.annotations():
        if ann.class_id == class_id:
            gts.setdefault(img.image_id, []).append(ann.box)
    n_gt = sum(len(v) for v in gts.values())
    dets = sorted((d for d in preds if d.class_id == class_id),
                  key=lambda d: (-d.score, d.det_id))
    used = {image_id: [False] * len(v) for image_id, v in gts.items()}
    tp = fp = 0
    points = []
    for det in dets:
        candidates = gts.get(det.image_id, [])
        best, best_iou = None, None
        for k, g in enumerate(candidates):
            if used[det.image_id][k]:
                continue
            value = naive_iou(det.box, g)
            if best_iou is None or value > best_iou:
                best, best_iou = k, value
        if best is not None and best_iou >= threshold:
            used[det.image_id][best] = True
            tp += 1
        else:
            fp += 1
        points.append((Fraction(tp, n_gt), Fraction(tp, tp + fp)))

    area = Fraction(0)
    previous = Fraction(0)
    for r in sorted({r for r, _ in points}):
        if r == 0:
            continue
        envelope = max(p for rr, p in points if rr >= r)
        area += (r - previous) * envelope
        previous = r
    return area, tp, fp, n_gt - tp


def random_corpus(rng):
    """随机真值与带扰动的预测（含误检与同分）"""
    n_classes = int(rng.integers(1, 6))
    n_images = int(rng.integers(1, 51))
    boxes = {}
    for image_id in range(1, n_images + 1):
        boxes[image_id] = []
        for _ in range(int(rng.integers(0, 5))):
            x, y = rng.uniform(0, 900, 2)
            w, h = rng.uniform(5, 100, 2)
            boxes[image_id].append((int(rng.integers(n_classes)), BBox(x, y, x + w, y + h)))
    table = ClassTable.from_names(f"c{i}" for i in range(n_classes))
    gt = gt_dataset(boxes, table)

    preds = []
    budget = int(rng.integers(0, 201))
    for image_id, items in boxes.items():
        for class_id, b in items:
            if len(preds) >= budget:
                break
            if rng.random() < 0.8:
                dx, dy = rng.normal(0, 0.2, 2) * (b.xmax - b.xmin)
                preds.append((image_id, class_id, BBox(b.xmin + dx, b.ymin + dy,
                                                       b.xmax + dx, b.ymax + dy)))
    while len(preds) < budget and rng.random() < 0.9:
        image_id = int(rng.integers(1, n_images + 1))
        x, y = rng.uniform(0, 900, 2)
        w, h = rng.uniform(5, 100, 2)
        preds.append((image_id, int(rng.integers(n_classes)), BBox(x, y, x + w, y + h)))

    detections = [
        Detection(image_id, class_id, b, float(np.round(rng.random(), 1)), det_id=i)
        for i, (image_id, class_id, b) in enumerate(preds)
    ]
    return gt, detections


class TestEvalConfig:
    """测试评估配置"""

    def test_defaults(self):
        assert EvalConfig().iou_thresholds == THRESHOLDS

    @pytest.mark.parametrize("thresholds", [(), (0.0,), (0.5, 1.2), (0.5, 0.25), (0.5, 0.5)])
    def test_invalid_thresholds(self, thresholds):
        with pytest.raises(ValueError):
            EvalConfig(iou_thresholds=thresholds)


class TestMatchDetections:
    """测试单图贪心匹配"""

    def test_tp_above_threshold(self):
        flags = match_detections([Detection(1, 0, BBox(0, 0, 10, 10), 0.9)],
                                 [BBox(0, 0, 10, 6)], 0.5)
        assert flags == [True]

    def test_threshold_is_inclusive(self):
        # IoU = 50 / 100
        det = Detection(1, 0, BBox(0, 0, 10, 10), 0.9)
        assert match_detections([det], [BBox(0, 0, 10, 5)], 0.5) == [True]
        assert match_detections([det], [BBox(0, 0, 10, 5)], 0.51) == [False]

    def test_two_detections_one_gt(self):
        dets = [Detection(1, 0, BBox(0, 0, 10, 10), 0.9), Detection(1, 0, BBox(0, 0, 10, 9), 0.8)]
        assert match_detections(dets, [BBox(0, 0, 10, 10)], 0.5) == [True, False]

    def test_no_gts(self):
        assert match_detections([Detection(1, 0, BBox(0, 0, 1, 1), 0.5)], [], 0.5) == [False]


class TestAveragePrecision:
    """测试 AP 计算"""

    def test_worked_example(self):
        assert average_precision([True, False, True], 2) == pytest.approx(5 / 6, abs=1e-12)

    def test_perfect(self):
        assert average_precision([True, True, True], 3) == pytest.approx(1.0, abs=1e-12)

    def test_no_detections(self):
        assert average_precision([], 3) == 0.0

    def test_no_ground_truth(self):
        assert average_precision([False], 0) == 0.0

    def test_worked_example_end_to_end(self):
        gt = gt_dataset({1: [(0, BBox(0, 0, 10, 10)), (0, BBox(50, 50, 60, 60))]})
        preds = [
            Detection(1, 0, BBox(0, 0, 10, 10), 0.9, det_id=0),
            Detection(1, 0, BBox(200, 200, 210, 210), 0.8, det_id=1),
            Detection(1, 0, BBox(50, 50, 60, 60), 0.7, det_id=2),
        ]
        result = evaluate(preds, gt)
        for t in THRESHOLDS:
            assert result.ap[(0, t)] == pytest.approx(5 / 6, abs=1e-12)
            assert result.counts[(0, t)].tp == 2
            assert result.counts[(0, t)].fp == 1
            assert result.counts[(0, t)].fn == 0


class TestEvaluate:
    """测试整体评估"""

    def test_identity(self):
        gt = gt_dataset({1: [(0, BBox(0, 0, 10, 10))], 2: [(0, BBox(5, 5, 50, 40))]})
        preds = [Detection(img.image_id, a.class_id, a.box, 1.0, det_id=i)
                 for i, (img, a) in enumerate(gt.annotations())]
        result = evaluate(preds, gt)
        assert all(result.mean_ap[t] == pytest.approx(1.0, abs=1e-12) for t in THRESHOLDS)
        assert result.metric_name == "AP"

    def test_multiclass_metric_name(self):
        gt = gt_dataset({1: [(0, BBox(0, 0, 10, 10))]}, ClassTable.fair1m())
        result = evaluate([], gt)
        assert result.metric_name == "mAP"
        assert result.classes == [0]
        assert result.mean_ap[0.5] == 0.0

    def test_empty_ground_truth(self):
        result = evaluate([], gt_dataset({1: []}))
        assert result.mean_ap == {t: 0.0 for t in THRESHOLDS}
        assert result.classes == []

    def test_unknown_image(self):
        gt = gt_dataset({1: [(0, BBox(0, 0, 10, 10))]})
        with pytest.raises(ConsistencyError):
            evaluate([Detection(9, 0, BBox(0, 0, 1, 1), 0.5)], gt)

    def test_unknown_class(self):
        gt = gt_dataset({1: [(0, BBox(0, 0, 10, 10))]})
        with pytest.raises(ConsistencyError):
            evaluate([Detection(1, 3, BBox(0, 0, 1, 1), 0.5)], gt)

    def test_point_annotations_are_ignored(self):
        from geoweak.core.models import PixelPoint
        gt = Dataset(ClassTable.single_class(), (
            ImageRecord(1, 100, 100, (
                Annotation(id=1, class_id=0, box=BBox(0, 0, 10, 10)),
                Annotation(id=2, class_id=0, point=PixelPoint(50, 50)),
            )),
        ))
        result = evaluate([Detection(1, 0, BBox(0, 0, 10, 10), 0.9)], gt)
        assert result.counts[(0, 0.5)].fn == 0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            gt, preds = random_corpus(rng)
            result = evaluate(preds, gt)
            for (class_id, t), ap in result.ap.items():
                exact, tp, fp, fn = naive_ap(preds, gt, class_id, t)
                assert result.counts[(class_id, t)] == MatchCounts(tp, fp, fn)
                # 评估器用浮点累加，参照值是有理数只舍入一次，两者只差舍入误差
                assert abs(Fraction(ap) - exact) <= Fraction(1, 10**12)
                assert 0.0 <= ap <= 1.0

    def test_workers_do_not_change_result(self):
        gt, preds = random_corpus(np.random.default_rng(8))
        assert evaluate(preds, gt) == evaluate(preds, gt, EvalConfig(workers=4))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            gt, preds = random_corpus(rng)
            shuffled = [preds[i] for i in rng.permutation(len(preds))]
            assert evaluate(shuffled, gt) == evaluate(preds, gt)

    def test_ap_non_increasing_in_threshold(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            gt, preds = random_corpus(rng)
            result = evaluate(preds, gt)
            for c in result.classes:
                values = [result.ap[(c, t)] for t in THRESHOLDS]
                assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_low_score_false_positive(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            gt, preds = random_corpus(rng)
            if not gt.image_ids:
                continue
            before = evaluate(preds, gt)
            fp = Detection(gt.image_ids[0], 0, BBox(999, 999, 1000, 1000), 0.0,
                           det_id=len(preds))
            after = evaluate(preds + [fp], gt)
            for key, value in after.ap.items():
                assert value <= before.ap[key] + 1e-12

    def test_sort_detections_tie_rule(self):
        dets = [Detection(1, 0, BBox(0, 0, 1, 1), 0.5, det_id=3),
                Detection(1, 0, BBox(0, 0, 1, 1), 0.5, det_id=1),
                Detection(1, 0, BBox(0, 0, 1, 1), 0.9, det_id=2)]
        assert [d.det_id for d in sort_detections(dets)] == [2, 1, 3]

    def test_summary_rows(self):
        gt = gt_dataset({1: [(0, BBox(0, 0, 10, 10))]})
        result = evaluate([Detection(1, 0, BBox(0, 0, 10, 10), 0.9)], gt)
        rows = result.summary_rows()
        assert len(rows) == 2 * len(THRESHOLDS)
        assert rows[1]["class_name"] == "AP"
        data = result.to_dict()
        assert data["metric"] == "AP"
        assert data["mean_ap"]["0.5"] == pytest.approx(1.0)
