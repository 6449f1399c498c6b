"""文件格式定义、记录校验与字典转换

检测数据集（JSON）:
    categories: [{id, name}]
    images: [{id, width, height, country?, lat?, lon?, cluster_id?}]
    annotations: [{id, image_id, category_id, bbox:[x,y,w,h] | point:[x,y] | obb:[x1..y4],
                   lat?, lon?, source_point?:[x,y], score?, provenance?}]

obb 为有向框的 4 个角点，解析时转换为最小外接矩形；这是 FAIR1M 类数据的等价格式。
"""
import math
from enum import Enum
from typing import Any, Dict, List, Optional

from ..core.models import (
    Annotation, BBox, ClassEntry, ClassTable, Dataset, Detection, GeoPoint, ImageRecord,
    PixelPoint, Provenance, PseudoAnnotation,
)

DATASET_KEYS = ("categories", "images", "annotations")
GEOMETRY_KEYS = ("bbox", "point", "obb")


class ParseMode(Enum):
    """解析模式：严格模式遇到第一条坏记录即中止；宽松模式丢弃并计数"""
    STRICT = "strict"
    LENIENT = "lenient"


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _number_list(value: Any, length: int) -> bool:
    return isinstance(value, list) and len(value) == length and all(_is_number(v) for v in value)


class DataValidator:
    """原始记录校验器：返回错误列表，空列表表示通过"""

    @classmethod
    def validate_category(cls, data: Any) -> List[str]:
        if not isinstance(data, dict):
            return ["类别记录必须是对象"]
        errors = []
        if not _is_int(data.get("id")) or data["id"] < 0:
            errors.append(f"无效的类别 id: {data.get('id')}")
        if not isinstance(data.get("name"), str) or not data["name"]:
            errors.append("类别缺少 name")
        return errors

    @classmethod
    def validate_image(cls, data: Any) -> List[str]:
        if not isinstance(data, dict):
            return ["图像记录必须是对象"]
        errors = []
        if not _is_int(data.get("id")):
            errors.append(f"无效的图像 id: {data.get('id')}")
        for key in ("width", "height"):
            if not _is_int(data.get(key)) or data[key] <= 0:
                errors.append(f"无效的 {key}: {data.get(key)}")
        if data.get("country") is not None and not isinstance(data["country"], str):
            errors.append("country 必须是字符串")
        errors.extend(cls._validate_latlon(data))
        if data.get("cluster_id") is not None and not _is_int(data["cluster_id"]):
            errors.append("cluster_id 必须是整数")
        return errors

    @classmethod
    def validate_annotation(cls, data: Any) -> List[str]:
        if not isinstance(data, dict):
            return ["标注记录必须是对象"]
        errors = []
        for key in ("id", "image_id", "category_id"):
            if not _is_int(data.get(key)):
                errors.append(f"无效的 {key}: {data.get(key)}")

        present = [k for k in GEOMETRY_KEYS if k in data]
        if len(present) != 1:
            errors.append(f"标注必须且只能包含 bbox/point/obb 之一，实际: {present}")
        elif present[0] == "bbox":
            bbox = data["bbox"]
            if not _number_list(bbox, 4):
                errors.append(f"bbox 必须是 4 个有限数值: {bbox}")
            elif bbox[2] <= 0 or bbox[3] <= 0:
                errors.append(f"bbox 宽高必须为正: {bbox}")
        elif present[0] == "point":
            if not _number_list(data["point"], 2):
                errors.append(f"point 必须是 2 个有限数值: {data['point']}")
        elif not _number_list(data["obb"], 8):
            errors.append(f"obb 必须是 8 个有限数值: {data['obb']}")

        if "source_point" in data and not _number_list(data["source_point"], 2):
            errors.append(f"source_point 必须是 2 个有限数值: {data['source_point']}")
        errors.extend(cls._validate_latlon(data))
        if data.get("score") is not None:
            if not _is_number(data["score"]) or not 0.0 <= data["score"] <= 1.0:
                errors.append(f"score 必须位于 [0,1]: {data['score']}")
        if data.get("provenance") is not None and data["provenance"] not in {
            p.value for p in Provenance
        }:
            errors.append(f"未知的 provenance: {data['provenance']}")
        return errors

    @classmethod
    def validate_prediction(cls, data: Any) -> List[str]:
        if not isinstance(data, dict):
            return ["预测记录必须是对象"]
        errors = []
        for key in ("image_id", "category_id"):
            if not _is_int(data.get(key)):
                errors.append(f"无效的 {key}: {data.get(key)}")
        bbox = data.get("bbox")
        if not _number_list(bbox, 4):
            errors.append(f"bbox 必须是 4 个有限数值: {bbox}")
        elif bbox[2] <= 0 or bbox[3] <= 0:
            errors.append(f"bbox 宽高必须为正: {bbox}")
        score = data.get("score")
        if not _is_number(score) or not 0.0 <= score <= 1.0:
            errors.append(f"score 必须位于 [0,1]: {score}")
        return errors

    @staticmethod
    def _validate_latlon(data: Dict[str, Any]) -> List[str]:
        has_lat, has_lon = data.get("lat") is not None, data.get("lon") is not None
        if has_lat != has_lon:
            return ["lat 与 lon 必须同时给出"]
        if not has_lat:
            return []
        if not _is_number(data["lat"]) or not _is_number(data["lon"]):
            return ["lat/lon 必须是有限数值"]
        if not GeoPoint(float(data["lat"]), float(data["lon"])).is_valid():
            return [f"经纬度越界: lat={data['lat']}, lon={data['lon']}"]
        return []


def geo_from_dict(data: Dict[str, Any]) -> Optional[GeoPoint]:
    if data.get("lat") is None:
        return None
    return GeoPoint(float(data["lat"]), float(data["lon"]))


def class_table_from_dicts(categories: List[Dict[str, Any]]) -> ClassTable:
    entries = sorted((ClassEntry(int(c["id"]), c["name"]) for c in categories),
                     key=lambda e: e.class_id)
    return ClassTable(tuple(entries))


def image_from_dict(data: Dict[str, Any], annotations: List[Annotation]) -> ImageRecord:
    return ImageRecord(
        image_id=data["id"],
        width=data["width"],
        height=data["height"],
        annotations=tuple(annotations),
        country=data.get("country"),
        centroid_geo=geo_from_dict(data),
        cluster_id=data.get("cluster_id"),
    )


def annotation_from_dict(data: Dict[str, Any], box: Optional[BBox] = None) -> Annotation:
    """由已校验的字典构造标注；box 为调用方已换算（裁剪、外接矩形）后的框"""
    point = PixelPoint(*map(float, data["point"])) if "point" in data else None
    source_pixel = (
        PixelPoint(*map(float, data["source_point"])) if "source_point" in data else None
    )
    provenance = Provenance(data.get("provenance", Provenance.MANUAL.value))
    cls = PseudoAnnotation if provenance == Provenance.PSEUDO else Annotation
    return cls(
        id=data["id"],
        class_id=data["category_id"],
        box=box,
        point=point,
        source_geo=geo_from_dict(data),
        source_pixel=source_pixel,
        score=float(data["score"]) if data.get("score") is not None else None,
        provenance=provenance,
    )


def annotation_to_dict(image_id: int, ann: Annotation) -> Dict[str, Any]:
    data: Dict[str, Any] = {"id": ann.id, "image_id": image_id, "category_id": ann.class_id}
    if ann.is_box:
        data["bbox"] = list(ann.box.to_xywh())
    else:
        data["point"] = [ann.point.x, ann.point.y]
    if ann.source_pixel is not None:
        data["source_point"] = [ann.source_pixel.x, ann.source_pixel.y]
    if ann.source_geo is not None:
        data["lat"] = ann.source_geo.lat
        data["lon"] = ann.source_geo.lon
    if ann.score is not None:
        data["score"] = ann.score
    if ann.provenance != Provenance.MANUAL:
        data["provenance"] = ann.provenance.value
    return data


def image_to_dict(img: ImageRecord) -> Dict[str, Any]:
    data: Dict[str, Any] = {"id": img.image_id, "width": img.width, "height": img.height}
    if img.country is not None:
        data["country"] = img.country
    if img.centroid_geo is not None:
        data["lat"] = img.centroid_geo.lat
        data["lon"] = img.centroid_geo.lon
    if img.cluster_id is not None:
        data["cluster_id"] = img.cluster_id
    return data


def dataset_to_dict(d: Dataset) -> Dict[str, Any]:
    """规范化输出：图像按 id 升序，标注按 (image_id, id) 升序"""
    images = sorted(d.images, key=lambda i: i.image_id)
    return {
        "categories": [{"id": e.class_id, "name": e.name} for e in d.class_table.entries],
        "images": [image_to_dict(img) for img in images],
        "annotations": [
            annotation_to_dict(img.image_id, ann)
            for img in images
            for ann in sorted(img.annotations, key=lambda a: a.id)
        ],
    }


def detection_to_dict(det: Detection) -> Dict[str, Any]:
    return {
        "image_id": det.image_id,
        "category_id": det.class_id,
        "bbox": list(det.box.to_xywh()),
        "score": det.score,
    }
