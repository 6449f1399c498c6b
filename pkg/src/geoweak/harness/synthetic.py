"""合成语料：风电场聚集的风机框与其地理来源点

每个风电场落在某个国家的经纬度范围内，若干张相邻图像覆盖同一个风电场。
图像内的框放在互不相同的网格单元中，因此两两不重叠。
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..core.models import (
    Annotation, BBox, ClassTable, Dataset, GeoPoint, ImageRecord, PixelPoint,
)
from ..errors import SynthesisError
from ..io.importer import PointRecord

logger = logging.getLogger(__name__)

METERS_PER_DEGREE = 111_320.0
MIN_BOX_PX = 8.0

# (国家, 纬度范围, 经度范围)
COUNTRY_ANCHORS: Tuple[Tuple[str, Tuple[float, float], Tuple[float, float]], ...] = (
    ("US", (30.0, 47.0), (-122.0, -75.0)),
    ("CN", (25.0, 45.0), (100.0, 120.0)),
    ("ES", (36.0, 43.0), (-8.0, 2.0)),
    ("DE", (48.0, 54.0), (7.0, 14.0)),
    ("FR", (43.5, 50.5), (-1.0, 7.0)),
    ("BR", (-30.0, -5.0), (-55.0, -36.0)),
    ("IN", (10.0, 28.0), (70.0, 85.0)),
    ("AU", (-38.0, -20.0), (115.0, 150.0)),
)


@dataclass(frozen=True)
class SyntheticCorpus:
    dataset: Dataset
    points: List[PointRecord]
    farms: int


def generate_synthetic(
    n_images: int,
    objects_per_image: Tuple[int, int] = (1, 4),
    n_classes: int = 1,
    n_countries: int = 4,
    farm_spread_m: float = 300.0,
    seed: int = 0,
    image_size: int = 416,
    images_per_farm: int = 5,
    negative_fraction: float = 0.0,
    gsd_m: float = 1.5,
) -> SyntheticCorpus:
    """生成确定性的合成语料

    Args:
        objects_per_image: 每张正样本图像的框数量范围（闭区间）
        farm_spread_m: 风电场内图像中心相对场址的位置标准差（米）
        gsd_m: 地面采样距离（米/像素）

    Raises:
        SynthesisError: 参数无效，或框数量超过图像能容纳的上限
    """
    lo, hi = objects_per_image
    if n_images < 1 or lo < 0 or hi < max(lo, 1) or n_classes < 1 or images_per_farm < 1:
        raise SynthesisError(
            f"无效的合成参数: n_images={n_images}, objects={objects_per_image}, "
            f"n_classes={n_classes}, images_per_farm={images_per_farm}"
        )
    if not 1 <= n_countries <= len(COUNTRY_ANCHORS):
        raise SynthesisError(f"n_countries 必须位于 [1, {len(COUNTRY_ANCHORS)}]: {n_countries}")
    if farm_spread_m <= 0 or gsd_m <= 0 or not 0 <= negative_fraction < 1:
        raise SynthesisError("farm_spread_m、gsd_m 必须为正，negative_fraction 必须位于 [0, 1)")
    grid = math.ceil(math.sqrt(hi))
    if image_size / grid < 2 * MIN_BOX_PX:
        raise SynthesisError(
            f"{image_size}px 的图像放不下 {hi} 个不重叠的框（每个至少 {MIN_BOX_PX:g}px）"
        )

    rng = np.random.default_rng(seed)
    class_table = (ClassTable.single_class() if n_classes == 1
                   else ClassTable.from_names(f"class_{i}" for i in range(n_classes)))

    n_farms = math.ceil(n_images / images_per_farm)
    farms = []
    for f in range(n_farms):
        country, lat_range, lon_range = COUNTRY_ANCHORS[f % n_countries]
        farms.append((country, GeoPoint(float(rng.uniform(*lat_range)),
                                        float(rng.uniform(*lon_range)))))

    images: List[ImageRecord] = []
    points: List[PointRecord] = []
    next_ann = 1
    for i in range(n_images):
        country, site = farms[i // images_per_farm]
        offset = rng.normal(0.0, farm_spread_m, size=2)
        center = _offset(site, east_m=offset[0], north_m=offset[1])
        negative = rng.random() < negative_fraction
        k = 0 if negative else int(rng.integers(lo, hi + 1))

        annotations = []
        for box, class_id in _pack_boxes(rng, k, grid, image_size, n_classes):
            px = PixelPoint(
                _round((box.xmin + box.xmax) / 2 + rng.uniform(-0.25, 0.25) * box.width),
                _round((box.ymin + box.ymax) / 2 + rng.uniform(-0.25, 0.25) * box.height),
            )
            geo = _offset(center,
                          east_m=(px.x - image_size / 2) * gsd_m,
                          north_m=-(px.y - image_size / 2) * gsd_m)
            annotations.append(Annotation(
                id=next_ann, class_id=class_id, box=box, source_geo=geo, source_pixel=px,
            ))
            points.append(PointRecord(location=geo, class_id=class_id))
            next_ann += 1

        images.append(ImageRecord(
            image_id=i + 1, width=image_size, height=image_size,
            annotations=tuple(annotations), country=country, centroid_geo=center,
        ))

    logger.info("合成语料: %d 张图像, %d 个风电场, %d 个框", n_images, n_farms, len(points))
    return SyntheticCorpus(dataset=Dataset(class_table, tuple(images)), points=points,
                           farms=n_farms)


def _round(v: float) -> float:
    return round(float(v), 2)


def _offset(origin: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    lat = origin.lat + north_m / METERS_PER_DEGREE
    lon = origin.lon + east_m / (METERS_PER_DEGREE * math.cos(math.radians(origin.lat)))
    return GeoPoint(round(lat, 7), round(lon, 7))


def _pack_boxes(rng: np.random.Generator, k: int, grid: int, image_size: int,
                n_classes: int) -> List[Tuple[BBox, int]]:
    """在 grid×grid 个单元中随机挑 k 个，每个单元放一个框"""
    if k == 0:
        return []
    cell = image_size / grid
    boxes = []
    for c in sorted(rng.choice(grid * grid, size=k, replace=False).tolist()):
        x0, y0 = (c % grid) * cell, (c // grid) * cell
        w = float(rng.uniform(MIN_BOX_PX, 0.8 * cell))
        h = float(rng.uniform(MIN_BOX_PX, 0.8 * cell))
        x = float(rng.uniform(x0, x0 + cell - w))
        y = float(rng.uniform(y0, y0 + cell - h))
        box = BBox(_round(x), _round(y), _round(x + w), _round(y + h))
        boxes.append((box, int(rng.integers(n_classes))))
    return boxes
