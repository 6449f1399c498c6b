"""核心领域模型

像素坐标原点在图像左上角，x 向右、y 向下。所有类型构造后不可变，
可以在并发的工作线程之间只读共享。
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Tuple


class Split(Enum):
    """数据集划分"""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    TEACHER_EVAL = "teacher_eval"

    def sort_order(self) -> int:
        return list(Split).index(self)


class LabelMode(Enum):
    """训练图像的标注方式：强（框）或弱（点）"""
    STRONG = "strong"
    WEAK = "weak"


class Provenance(Enum):
    """标注来源"""
    MANUAL = "manual"
    PSEUDO = "pseudo"


@dataclass(frozen=True)
class PixelPoint:
    """像素坐标点"""
    x: float
    y: float

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


@dataclass(frozen=True)
class BBox:
    """轴对齐框，角点形式 [xmin, ymin, xmax, ymax]"""
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(x, y, x + w, y + h)

    def to_xywh(self) -> Tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax - self.xmin, self.ymax - self.ymin)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.xmin, self.ymin, self.xmax, self.ymax))

    def is_valid(self) -> bool:
        """坐标有限且面积严格为正"""
        return self.is_finite() and self.xmin < self.xmax and self.ymin < self.ymax

    def corners(self) -> Tuple[PixelPoint, PixelPoint, PixelPoint, PixelPoint]:
        return (
            PixelPoint(self.xmin, self.ymin),
            PixelPoint(self.xmax, self.ymin),
            PixelPoint(self.xmax, self.ymax),
            PixelPoint(self.xmin, self.ymax),
        )


@dataclass(frozen=True)
class OrientedBox:
    """有向框：按多边形顺序排列的 4 个角点"""
    corners: Tuple[PixelPoint, PixelPoint, PixelPoint, PixelPoint]

    def __post_init__(self):
        if len(self.corners) != 4:
            raise ValueError(f"有向框需要 4 个角点，实际 {len(self.corners)} 个")

    @classmethod
    def from_flat(cls, coords: Iterable[float]) -> "OrientedBox":
        values = [float(v) for v in coords]
        if len(values) != 8:
            raise ValueError(f"有向框需要 8 个坐标，实际 {len(values)} 个")
        return cls(tuple(PixelPoint(values[i], values[i + 1]) for i in range(0, 8, 2)))


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 经纬度（度）"""
    lat: float
    lon: float

    def is_valid(self) -> bool:
        return (
            math.isfinite(self.lat) and math.isfinite(self.lon)
            and -90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0
        )


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str


@dataclass(frozen=True)
class ClassTable:
    """类别表：class_id 从 0 开始连续"""
    entries: Tuple[ClassEntry, ...]

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "ClassTable":
        return cls(tuple(ClassEntry(i, name) for i, name in enumerate(names)))

    @classmethod
    def single_class(cls, name: str = "wind_turbine") -> "ClassTable":
        return cls.from_names([name])

    @classmethod
    def fair1m(cls) -> "ClassTable":
        """FAIR1M 的 5 个主类别"""
        return cls.from_names(["ship", "vehicle", "airplane", "court", "road"])

    @property
    def ids(self) -> List[int]:
        return [e.class_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, class_id: int) -> bool:
        return any(e.class_id == class_id for e in self.entries)

    def name_of(self, class_id: int) -> str:
        for entry in self.entries:
            if entry.class_id == class_id:
                return entry.name
        raise KeyError(class_id)

    def id_of(self, name: str) -> int:
        for entry in self.entries:
            if entry.name == name:
                return entry.class_id
        raise KeyError(name)

    def problems(self) -> List[str]:
        """返回类别表自身的问题描述（空列表表示合法）"""
        errors = []
        ids = self.ids
        if len(set(ids)) != len(ids):
            errors.append("class_id 重复")
        if sorted(ids) != list(range(len(ids))):
            errors.append("class_id 必须从 0 开始连续")
        return errors


@dataclass(frozen=True)
class Annotation:
    """单个标注：box 与 point 二选一

    source_geo / source_pixel 记录原始点标注（如 OSM 风机坐标）的地理位置与像素投影。
    """
    id: int
    class_id: int
    box: Optional[BBox] = None
    point: Optional[PixelPoint] = None
    source_geo: Optional[GeoPoint] = None
    source_pixel: Optional[PixelPoint] = None
    score: Optional[float] = None
    provenance: Provenance = Provenance.MANUAL

    def __post_init__(self):
        if (self.box is None) == (self.point is None):
            raise ValueError(f"标注 {self.id} 必须且只能有 box 或 point 之一")

    @property
    def is_box(self) -> bool:
        return self.box is not None

    @property
    def is_point(self) -> bool:
        return self.point is not None

    @property
    def is_pseudo(self) -> bool:
        return self.provenance == Provenance.PSEUDO


@dataclass(frozen=True)
class PseudoAnnotation(Annotation):
    """教师生成的伪框：必须包含其生成点"""
    provenance: Provenance = Provenance.PSEUDO

    def __post_init__(self):
        super().__post_init__()
        if self.box is None or self.source_pixel is None:
            raise ValueError(f"伪标注 {self.id} 需要 box 与 source_pixel")
        p = self.source_pixel
        b = self.box
        if not (b.xmin <= p.x <= b.xmax and b.ymin <= p.y <= b.ymax):
            raise ValueError(f"伪标注 {self.id} 的框不包含其生成点")


@dataclass(frozen=True)
class ImageRecord:
    """图像元数据与标注（不含像素）"""
    image_id: int
    width: int
    height: int
    annotations: Tuple[Annotation, ...] = ()
    country: Optional[str] = None
    centroid_geo: Optional[GeoPoint] = None
    cluster_id: Optional[int] = None

    @property
    def is_positive(self) -> bool:
        return len(self.annotations) > 0

    def boxes(self) -> List[Annotation]:
        return [a for a in self.annotations if a.is_box]

    def points(self) -> List[Annotation]:
        return [a for a in self.annotations if a.is_point]

    def with_annotations(self, annotations: Iterable[Annotation]) -> "ImageRecord":
        return replace(self, annotations=tuple(annotations))


@dataclass(frozen=True)
class Dataset:
    """语料容器：类别表 + 图像列表"""
    class_table: ClassTable
    images: Tuple[ImageRecord, ...] = ()
    _index: Dict[int, ImageRecord] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "_index", {img.image_id: img for img in self.images})

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self.images)

    @property
    def image_ids(self) -> List[int]:
        return [img.image_id for img in self.images]

    def image_by_id(self, image_id: int) -> Optional[ImageRecord]:
        return self._index.get(image_id)

    def annotations(self) -> Iterator[Tuple[ImageRecord, Annotation]]:
        for img in self.images:
            for ann in img.annotations:
                yield img, ann

    def max_annotation_id(self) -> int:
        return max((ann.id for _, ann in self.annotations()), default=0)

    def counts(self) -> Dict[str, int]:
        boxes = sum(1 for _, a in self.annotations() if a.is_box)
        points = sum(1 for _, a in self.annotations() if a.is_point)
        return {"images": len(self.images), "boxes": boxes, "points": points}

    def subset(self, image_ids: Iterable[int]) -> "Dataset":
        """按 id 取子集，保持原有顺序"""
        wanted = set(image_ids)
        return self.with_images(img for img in self.images if img.image_id in wanted)

    def with_images(self, images: Iterable[ImageRecord]) -> "Dataset":
        return Dataset(class_table=self.class_table, images=tuple(images))

    def is_single_class(self) -> bool:
        return len(self.class_table) == 1


@dataclass(frozen=True)
class Detection:
    """检测结果；det_id 用于同分排序（解析时按文件顺序编号）"""
    image_id: int
    class_id: int
    box: BBox
    score: float
    det_id: Optional[int] = None

    def is_valid(self) -> bool:
        return math.isfinite(self.score) and 0.0 <= self.score <= 1.0 and self.box.is_valid()
