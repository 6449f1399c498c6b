"""端到端流水线：导入 → 聚类 → 划分 → 逐标注比例（采样、弱标签、伪标签、合并、导出、评估）

学习阶段（教师、学生的训练）在文件边界之外；教师由噪声模拟或外部预测文件代替。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..config import ExperimentConfig
from ..core.evaluator import EvalConfig, EvalResult, evaluate
from ..core.geocluster import DbscanParams, cluster_dataset
from ..core.models import Dataset, Split
from ..core.splitter import (
    SplitAssignment, WeakSource, attach_source_points, check_split_consistency,
    default_region_rules, derive_weak_labels, retention_filter, sample_label_fractions,
    split_by_region, split_random_by_cluster,
)
from ..core.teacher import (
    NoiseModel, merge_strong_and_pseudo, pseudo_from_predictions, simulate_pseudo_labels,
    to_detections,
)
from ..core.validation import validate_dataset
from ..errors import ConfigError, GeoweakError, StageError
from ..io.exporter import (
    dumps_canonical, export_artifacts, write_dataset, write_eval_outputs, write_split_manifest,
)
from ..io.formats import ParseMode
from ..io.importer import (
    attach_pixel_points, parse_detection_dataset, parse_point_collection, parse_predictions,
    parse_split_manifest,
)
from .report import fraction_label, render_report, rows_from_record
from .synthetic import generate_synthetic

logger = logging.getLogger(__name__)

ARM_BASELINE = "baseline-strong-only"
ARM_WSSOD = "wssod-with-pseudo"
ARM_TEACHER = "teacher"


@contextmanager
def stage(name: str):
    """把阶段内的失败包装为带阶段名的 StageError"""
    logger.info("阶段开始: %s", name)
    try:
        yield
    except StageError:
        raise
    except (GeoweakError, ValueError, OSError) as e:
        raise StageError(name, e) from e


@dataclass
class FractionResult:
    """单个标注比例的结果"""
    fraction: float
    strong_images: int
    weak_images: int
    pseudo_boxes: int
    results: Dict[str, EvalResult]

    def __post_init__(self):
        missing = [arm for arm in (ARM_BASELINE, ARM_WSSOD) if arm not in self.results]
        if missing:
            raise ValueError(f"标注比例 {self.fraction} 缺少对比组: {missing}")

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "strong_images": self.strong_images,
            "weak_images": self.weak_images,
            "pseudo_boxes": self.pseudo_boxes,
            "results": {arm: self.results[arm].to_dict() for arm in sorted(self.results)},
        }


@dataclass
class RunRecord:
    """一次实验的结果；时间戳不参与相等比较，也不写入输出文件"""
    config_hash: str
    fractions: List[FractionResult]
    split_counts: Dict[str, int]
    started_at: Optional[datetime] = field(default=None, compare=False)
    finished_at: Optional[datetime] = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "split_counts": self.split_counts,
            "fractions": [f.to_dict() for f in self.fractions],
        }

    def summary(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """{arm: {fraction_label: {threshold: mAP}}}"""
        out: Dict[str, Dict[str, Dict[str, float]]] = {}
        for f in self.fractions:
            for arm, result in f.results.items():
                out.setdefault(arm, {})[fraction_label(f.fraction)] = {
                    f"{t:g}": result.mean_ap[t] for t in result.thresholds
                }
        return out


def load_corpus(cfg: ExperimentConfig) -> Dataset:
    """读取数据集（可附加像素点集合并做保留过滤）或生成合成语料"""
    if not cfg.dataset_path:
        corpus = generate_synthetic(
            n_images=cfg.synth_images,
            objects_per_image=(cfg.synth_objects_min, cfg.synth_objects_max),
            n_classes=cfg.synth_classes,
            n_countries=cfg.synth_countries,
            farm_spread_m=cfg.synth_farm_spread_m,
            seed=cfg.seed,
            images_per_farm=cfg.synth_images_per_farm,
            negative_fraction=cfg.synth_negative_fraction,
        )
        return corpus.dataset

    mode = ParseMode.LENIENT if cfg.lenient else ParseMode.STRICT
    d = parse_detection_dataset(cfg.dataset_path, mode).dataset
    if cfg.points_path:
        points = parse_point_collection(cfg.points_path)
        if any(p.is_geo for p in points):
            raise ConfigError("流水线只接受像素点集合；地理点集合用于 cluster 命令")
        d, _ = retention_filter(attach_pixel_points(d, points))
        d = attach_source_points(d)
    return d


def build_split(d: Dataset, cfg: ExperimentConfig) -> Tuple[Dataset, SplitAssignment]:
    if cfg.strategy == "predefined":
        split = parse_split_manifest(cfg.splits_path)
        check_split_consistency(d, split)
        return d.subset(split.mapping), split

    if any(img.cluster_id is None for img in d.images):
        d, report = cluster_dataset(d, DbscanParams(eps=cfg.eps_m, min_pts=cfg.min_pts))
        logger.info("聚类: %d 个簇, %d 个单例, %d 个冲突图像",
                    report.clusters, report.singletons, len(report.conflicts))
    if cfg.strategy == "region":
        return d, split_by_region(d, default_region_rules(cfg.meridian))
    return d, split_random_by_cluster(d, cfg.split_ratios, cfg.seed)


def run_fraction(d: Dataset, split: SplitAssignment, fraction: float,
                 cfg: ExperimentConfig, out_dir: Path) -> FractionResult:
    """单个标注比例：采样 → 导出 → 伪标签 → 合并 → 评估"""
    source = WeakSource(cfg.point_source)
    eval_cfg = EvalConfig(iou_thresholds=tuple(cfg.iou_thresholds))
    arm_dir = out_dir / f"fraction_{fraction_label(fraction)}"

    with stage(f"fractions[{fraction:g}]"):
        modes = sample_label_fractions(d, split, fraction, cfg.seed, cfg.stratify)
        export_artifacts(d, split, modes, arm_dir, source)

    train = d.subset(split.ids_in(Split.TRAIN))
    strong = train.subset(modes.strong_ids)
    weak_truth = train.subset(modes.weak_ids)

    with stage(f"pseudolabel[{fraction:g}]"):
        if cfg.predictions_path:
            detections = parse_predictions(
                cfg.predictions_path.format(fraction=fraction_label(fraction))
            )
            weak = derive_weak_labels(weak_truth, modes, source)
            pseudo = pseudo_from_predictions(weak, detections, source)
        else:
            noise = NoiseModel(cfg.center_sigma, cfg.scale_sigma, cfg.drop_rate,
                               cfg.score_alpha, cfg.score_beta)
            pseudo = simulate_pseudo_labels(weak_truth, noise, cfg.seed, source)
        student = merge_strong_and_pseudo(strong, pseudo)
        write_dataset(pseudo, arm_dir / "pseudo_labels.json")
        write_dataset(student, arm_dir / "student_train.json")

    with stage(f"evaluate[{fraction:g}]"):
        results = {
            ARM_BASELINE: evaluate(to_detections(strong), train, eval_cfg),
            ARM_WSSOD: evaluate(to_detections(student), train, eval_cfg),
            ARM_TEACHER: evaluate(to_detections(pseudo), weak_truth, eval_cfg),
        }
        for arm, result in results.items():
            write_eval_outputs(result, arm_dir / f"eval_{arm}.json", arm_dir / f"eval_{arm}.csv")

    pseudo_boxes = sum(1 for _, a in pseudo.annotations() if a.is_box)
    logger.info("标注比例 %g: 强 %d 张, 弱 %d 张, 伪框 %d 个", fraction,
                len(modes.strong_ids), len(modes.weak_ids), pseudo_boxes)
    return FractionResult(
        fraction=fraction,
        strong_images=len(modes.strong_ids),
        weak_images=len(modes.weak_ids),
        pseudo_boxes=pseudo_boxes,
        results=results,
    )


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """运行完整实验并写出全部产物

    输出目录结构：dataset.json、splits.csv、fraction_<n>pct/…、run_record.json、
    report.md、report.csv。相同配置与种子得到逐字节相同的输出。

    Raises:
        StageError: 任一阶段失败（附带阶段名）
    """
    started = datetime.now()
    out_dir = Path(cfg.out_dir)

    with stage("ingest"):
        d = load_corpus(cfg)
        report = validate_dataset(d)
        if not report.ok:
            first = report.violations[0]
            raise ConfigError(f"数据集校验失败 ({len(report.violations)} 处): {first.message}")

    with stage("split"):
        d, split = build_split(d, cfg)
        write_dataset(d, out_dir / "dataset.json")
        write_split_manifest(split, out_dir / "splits.csv")

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(run_fraction, d, split, f, cfg, out_dir) for f in cfg.fractions]
        fractions = [future.result() for future in futures]

    record = RunRecord(
        config_hash=cfg.config_hash(),
        fractions=fractions,
        split_counts={s.value: n for s, n in split.counts().items()},
        started_at=started,
    )
    with stage("report"):
        (out_dir / "run_record.json").write_text(dumps_canonical(record.to_dict()),
                                                 encoding="utf-8")
        document = render_report(rows_from_record(record), thresholds=cfg.iou_thresholds,
                                 compare=(ARM_WSSOD, ARM_BASELINE))
        (out_dir / "report.md").write_text(document.markdown, encoding="utf-8")
        (out_dir / "report.csv").write_text(document.csv, encoding="utf-8")

    record.finished_at = datetime.now()
    logger.info("实验完成: %s", out_dir)
    return record
