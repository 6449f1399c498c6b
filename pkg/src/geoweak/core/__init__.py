"""核心模块：领域模型、几何、聚类、划分、教师模拟与评估"""
from .evaluator import EvalConfig, EvalResult, evaluate
from .geocluster import DbscanParams, cluster_dataset, dbscan
from .models import Annotation, BBox, Dataset, Detection, GeoPoint, ImageRecord, PixelPoint, Split
from .teacher import NoiseModel, merge_strong_and_pseudo, simulate_pseudo_labels
from .validation import ValidationReport, validate_dataset

__all__ = [
    "Annotation", "BBox", "Dataset", "Detection", "GeoPoint", "ImageRecord", "PixelPoint",
    "Split", "ValidationReport", "validate_dataset", "DbscanParams", "dbscan",
    "cluster_dataset", "NoiseModel", "simulate_pseudo_labels", "merge_strong_and_pseudo",
    "EvalConfig", "EvalResult", "evaluate",
]
