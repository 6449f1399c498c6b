"""解析器：检测数据集、点集合、预测文件、划分与标注方式清单"""
import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Tuple, Union

from ..core.geometry import clamp, mbr
from ..core.models import (
    Annotation, BBox, Dataset, Detection, GeoPoint, ImageRecord, LabelMode, OrientedBox,
    PixelPoint, Split,
)
from ..core.splitter import LabelModeAssignment, SplitAssignment
from ..core.validation import ValidationReport, validate_dataset
from ..errors import DataFormatError, GeometryError, RecordError
from .formats import (
    DATASET_KEYS, DataValidator, ParseMode, annotation_from_dict, class_table_from_dicts,
    image_from_dict,
)

logger = logging.getLogger(__name__)

Source = Union[str, Path, TextIO]


class ImportResult:
    """导入结果"""

    def __init__(self):
        self.dataset: Optional[Dataset] = None
        self.dropped_count = 0
        self.clamped_ids: List[int] = []
        self.errors: List[Tuple[int, str]] = []  # (记录下标, 错误信息)
        self.report: Optional[ValidationReport] = None

    def add_error(self, index: int, error: str):
        self.dropped_count += 1
        self.errors.append((index, error))


@dataclass(frozen=True)
class PointRecord:
    """点集合中的一条记录：地理点或像素点（像素点带 image_id）"""
    location: Union[GeoPoint, PixelPoint]
    class_id: int
    image_id: Optional[int] = None

    @property
    def is_geo(self) -> bool:
        return isinstance(self.location, GeoPoint)


def _read_text(source: Source) -> str:
    try:
        if hasattr(source, "read"):
            return source.read()
        with open(source, "r", encoding="utf-8") as f:
            return f.read()
    except UnicodeDecodeError as e:
        raise DataFormatError(f"不是 UTF-8 文本: {source}: {e}") from e
    except OSError as e:
        raise DataFormatError(f"读取文件失败: {source}: {e}") from e


def _load_json(source: Source) -> Any:
    text = _read_text(source)
    if not text.strip():
        return None
    try:
        return json.loads(text)
    except ValueError as e:
        raise DataFormatError(f"不是合法的 JSON: {e}") from e


def load_json_object(source: Source) -> Dict[str, Any]:
    """读取顶层为对象的 JSON 文件（如 run_record.json）

    Raises:
        DataFormatError: 无法读取、不是 UTF-8、不是合法 JSON 或顶层不是对象
    """
    data = _load_json(source)
    if not isinstance(data, dict):
        raise DataFormatError("JSON 顶层必须是对象")
    return data


def _reject(result: ImportResult, mode: ParseMode, index: int, message: str,
            record_id: Optional[int] = None):
    """严格模式抛出 RecordError，宽松模式记录并丢弃"""
    if mode == ParseMode.STRICT:
        raise RecordError(index, message, record_id)
    logger.debug("丢弃第 %d 条记录: %s", index, message)
    result.add_error(index, message)


def parse_detection_dataset(source: Source, mode: ParseMode = ParseMode.STRICT) -> ImportResult:
    """解析检测数据集文件（轴对齐框 / 点 / 有向框），返回带校验报告的导入结果

    超出图像范围的框在解析时被裁剪并记录到 clamped_ids；有向框立即转换为最小外接矩形。
    记录下标在 images 与 annotations 两段中分别从 0 计数。

    Raises:
        DataFormatError: 顶层结构或类别表无效
        RecordError: 严格模式下的坏记录
    """
    data = _load_json(source)
    if not isinstance(data, dict) or any(k not in data for k in DATASET_KEYS):
        raise DataFormatError(f"数据集文件必须包含顶层键 {list(DATASET_KEYS)}")
    if not all(isinstance(data[k], list) for k in DATASET_KEYS):
        raise DataFormatError("categories/images/annotations 必须是列表")

    for i, category in enumerate(data["categories"]):
        errors = DataValidator.validate_category(category)
        if errors:
            raise DataFormatError(f"第 {i} 个类别无效: {'; '.join(errors)}")
    class_table = class_table_from_dicts(data["categories"])
    problems = class_table.problems()
    if problems:
        raise DataFormatError(f"类别表无效: {'; '.join(problems)}")

    result = ImportResult()
    image_rows: Dict[int, Dict[str, Any]] = {}
    for i, row in enumerate(data["images"]):
        errors = DataValidator.validate_image(row)
        if not errors and row["id"] in image_rows:
            errors = [f"图像 id {row['id']} 重复"]
        if errors:
            _reject(result, mode, i, "images: " + "; ".join(errors), _safe_id(row))
            continue
        image_rows[row["id"]] = row

    annotations: Dict[int, List[Annotation]] = {image_id: [] for image_id in image_rows}
    seen_ids = set()
    for i, row in enumerate(data["annotations"]):
        try:
            ann = _parse_annotation(row, image_rows, class_table, seen_ids, result)
        except (RecordError, GeometryError, ValueError) as e:
            message = e.reason if isinstance(e, RecordError) else str(e)
            _reject(result, mode, i, "annotations: " + message, _safe_id(row))
            continue
        seen_ids.add(ann.id)
        annotations[row["image_id"]].append(ann)

    images = [image_from_dict(row, annotations[image_id]) for image_id, row in image_rows.items()]
    result.dataset = Dataset(class_table=class_table, images=tuple(images))
    result.report = validate_dataset(result.dataset)
    if result.dropped_count:
        logger.info("宽松模式丢弃 %d 条记录", result.dropped_count)
    return result


def _safe_id(row: Any) -> Optional[int]:
    return row.get("id") if isinstance(row, dict) and isinstance(row.get("id"), int) else None


def _parse_annotation(row, image_rows, class_table, seen_ids, result) -> Annotation:
    errors = DataValidator.validate_annotation(row)
    if errors:
        raise ValueError("; ".join(errors))
    if row["id"] in seen_ids:
        raise ValueError(f"标注 id {row['id']} 重复")
    image = image_rows.get(row["image_id"])
    if image is None:
        raise ValueError(f"引用了不存在的图像 {row['image_id']}")
    if row["category_id"] not in class_table:
        raise ValueError(f"未知的类别 {row['category_id']}")

    if "point" in row:
        x, y = row["point"]
        if not (0 <= x <= image["width"] and 0 <= y <= image["height"]):
            raise ValueError(f"点 ({x}, {y}) 位于图像之外")
        return annotation_from_dict(row)

    if "obb" in row:
        raw = mbr(OrientedBox.from_flat(row["obb"]))
    else:
        raw = BBox.from_xywh(*map(float, row["bbox"]))
    box = clamp(raw, image["width"], image["height"])
    if not box.is_valid():
        raise ValueError(f"框 {raw} 完全位于图像之外")
    if box != raw:
        result.clamped_ids.append(row["id"])
        logger.warning("标注 %s 的框超出图像 %s 的范围，已裁剪", row["id"], row["image_id"])
    return annotation_from_dict(row, box=box)


def parse_point_collection(source: Source) -> List[PointRecord]:
    """解析点集合

    支持两种格式（不可混用）：
    - GeoJSON FeatureCollection，Point 几何为 [lon, lat]，properties.category_id（缺省 0）
    - 像素点列表 [{image_id, x, y, category_id}]

    Raises:
        DataFormatError: 无法识别的格式
        RecordError: 坐标越界或格式混用
    """
    data = _load_json(source)
    if isinstance(data, dict) and "features" in data:
        if not isinstance(data["features"], list):
            raise DataFormatError("features 必须是列表")
        return [_parse_feature(i, f) for i, f in enumerate(data["features"])]
    if isinstance(data, list):
        return [_parse_pixel_point(i, row) for i, row in enumerate(data)]
    raise DataFormatError("点集合必须是 GeoJSON FeatureCollection 或像素点列表")


def _category(i: int, value: Any) -> int:
    if value is None:
        return 0
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise RecordError(i, f"无效的 category_id: {value}")
    return value


def _parse_feature(i: int, feature: Any) -> PointRecord:
    if not isinstance(feature, dict):
        raise RecordError(i, "feature 必须是对象")
    geometry = feature.get("geometry")
    if not isinstance(geometry, dict):
        if any(k in feature for k in ("x", "y", "image_id")):
            raise RecordError(i, "GeoJSON 中混入了像素点记录")
        raise RecordError(i, "feature 缺少 geometry")
    if geometry.get("type") != "Point":
        raise RecordError(i, f"只支持 Point 几何，实际: {geometry.get('type')}")
    coords = geometry.get("coordinates")
    if not (isinstance(coords, list) and len(coords) >= 2
            and all(isinstance(c, (int, float)) for c in coords[:2])):
        raise RecordError(i, f"无效的坐标: {coords}")
    point = GeoPoint(lat=float(coords[1]), lon=float(coords[0]))
    if not point.is_valid():
        raise RecordError(i, f"经纬度越界: lat={point.lat}, lon={point.lon}")
    properties = feature.get("properties") or {}
    return PointRecord(location=point, class_id=_category(i, properties.get("category_id")))


def _parse_pixel_point(i: int, row: Any) -> PointRecord:
    if not isinstance(row, dict):
        raise RecordError(i, "像素点记录必须是对象")
    if any(k in row for k in ("geometry", "lat", "lon", "type")):
        raise RecordError(i, "像素点列表中混入了地理点记录")
    image_id, x, y = row.get("image_id"), row.get("x"), row.get("y")
    if not isinstance(image_id, int) or isinstance(image_id, bool):
        raise RecordError(i, f"无效的 image_id: {image_id}")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (x, y)):
        raise RecordError(i, f"无效的像素坐标: ({x}, {y})")
    point = PixelPoint(float(x), float(y))
    if not point.is_finite():
        raise RecordError(i, "像素坐标必须是有限值")
    return PointRecord(location=point, class_id=_category(i, row.get("category_id")),
                       image_id=image_id)


def parse_predictions(source: Source) -> List[Detection]:
    """解析预测文件，按 (image_id, 置信度降序, 文件顺序) 稳定排序

    Raises:
        DataFormatError: 顶层不是列表
        RecordError: 坏记录（如置信度超出 [0,1]）
    """
    data = _load_json(source)
    if data is None:
        return []
    if not isinstance(data, list):
        raise DataFormatError("预测文件顶层必须是列表")

    detections = []
    for i, row in enumerate(data):
        errors = DataValidator.validate_prediction(row)
        if errors:
            raise RecordError(i, "; ".join(errors))
        detections.append(Detection(
            image_id=row["image_id"],
            class_id=row["category_id"],
            box=BBox.from_xywh(*map(float, row["bbox"])),
            score=float(row["score"]),
            det_id=i,
        ))
    detections.sort(key=lambda d: (d.image_id, -d.score, d.det_id))
    return detections


def _read_manifest(source: Source, value_column: str) -> List[Tuple[int, str]]:
    text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["image_id",
                                                                               value_column]:
        raise DataFormatError(f"清单表头必须是 image_id,{value_column}")
    rows = []
    seen = set()
    for line, row in enumerate(reader, start=2):
        try:
            image_id = int(row["image_id"])
        except (TypeError, ValueError):
            raise RecordError(line, f"无效的 image_id: {row['image_id']}")
        if image_id in seen:
            raise RecordError(line, f"image_id {image_id} 重复", image_id)
        seen.add(image_id)
        rows.append((image_id, (row[value_column] or "").strip()))
    return rows


def parse_split_manifest(source: Source) -> SplitAssignment:
    """读取 image_id,split 清单"""
    mapping = {}
    for line, (image_id, value) in enumerate(_read_manifest(source, "split"), start=2):
        try:
            mapping[image_id] = Split(value)
        except ValueError:
            raise RecordError(line, f"未知的划分: {value}", image_id)
    return SplitAssignment(mapping=mapping)


def parse_label_modes(source: Source) -> LabelModeAssignment:
    """读取 image_id,mode 清单"""
    mapping = {}
    for line, (image_id, value) in enumerate(_read_manifest(source, "mode"), start=2):
        try:
            mapping[image_id] = LabelMode(value)
        except ValueError:
            raise RecordError(line, f"未知的标注方式: {value}", image_id)
    return LabelModeAssignment(mapping=mapping)


def attach_pixel_points(d: Dataset, points: List[PointRecord]) -> Dataset:
    """把像素点集合作为点标注加入对应图像（用于随后的保留过滤）

    新标注 id 从数据集现有最大 id 之后递增；引用未知图像的点被忽略并记录日志。
    """
    next_id = d.max_annotation_id() + 1
    extra: Dict[int, List[Annotation]] = {}
    for record in points:
        if record.is_geo or record.image_id is None:
            raise DataFormatError("只能附加像素点集合")
        if d.image_by_id(record.image_id) is None:
            logger.warning("点引用了不存在的图像 %s，忽略", record.image_id)
            continue
        extra.setdefault(record.image_id, []).append(
            Annotation(id=next_id, class_id=record.class_id, point=record.location)
        )
        next_id += 1
    images: List[ImageRecord] = [
        img.with_annotations(list(img.annotations) + extra.get(img.image_id, []))
        for img in d.images
    ]
    return d.with_images(images)
