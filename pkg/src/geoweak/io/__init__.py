"""数据导入导出模块"""

from .exporter import export_artifacts, write_dataset
from .filters import filter_fair1m
from .formats import ParseMode
from .importer import (
    ImportResult, parse_detection_dataset, parse_point_collection, parse_predictions,
)

__all__ = [
    "ParseMode", "ImportResult", "parse_detection_dataset", "parse_point_collection",
    "parse_predictions", "filter_fair1m", "export_artifacts", "write_dataset",
]
