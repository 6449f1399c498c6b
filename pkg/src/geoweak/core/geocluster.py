"""风电场聚类：基于 Haversine 距离的 DBSCAN

聚类结果按输入顺序确定：簇编号按每个簇第一个成员的输入下标从 0 编号，
边界点归属于按输入顺序最先扩展到它的核心簇。
"""
import logging
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConsistencyError
from .models import Dataset, GeoPoint, ImageRecord

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
NOISE = -1
NEIGHBOR_CHUNK = 1024


@dataclass(frozen=True)
class DbscanParams:
    """DBSCAN 参数：eps 单位为米，min_pts 计入点自身"""
    eps: float = 2000.0
    min_pts: int = 3

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps 必须为正数: {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts 必须 >= 1: {self.min_pts}")


@dataclass(frozen=True)
class ClusterAssignment:
    """逐点的簇标签，NOISE 为 -1"""
    labels: Tuple[int, ...]

    @property
    def n_clusters(self) -> int:
        return max(self.labels, default=NOISE) + 1


@dataclass
class ClusterReport:
    """图像级簇分配报告"""
    clusters: int = 0
    singletons: int = 0
    conflicts: List[Tuple[int, Dict[int, int]]] = field(default_factory=list)


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """两点之间的大圆距离（米）"""
    return float(_haversine_np(np.array([a.lat]), np.array([a.lon]),
                               np.array([b.lat]), np.array([b.lon]))[0])


def _haversine_np(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = (np.radians(v) for v in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def pairwise_haversine(points: Sequence[GeoPoint]) -> np.ndarray:
    """n×n 距离矩阵（米）"""
    lat = np.array([p.lat for p in points], dtype=float)
    lon = np.array([p.lon for p in points], dtype=float)
    return _haversine_np(lat[:, None], lon[:, None], lat[None, :], lon[None, :])


def neighbors_within(points: Sequence[GeoPoint], eps: float,
                     chunk: int = NEIGHBOR_CHUNK) -> List[np.ndarray]:
    """每个点 eps 米内（含自身）的邻居下标

    按 chunk 行分块计算距离，内存占用为 chunk × n 而不是 n × n。
    """
    lat = np.array([p.lat for p in points], dtype=float)
    lon = np.array([p.lon for p in points], dtype=float)
    neighbors: List[np.ndarray] = []
    for start in range(0, len(points), chunk):
        stop = start + chunk
        block = _haversine_np(lat[start:stop, None], lon[start:stop, None],
                              lat[None, :], lon[None, :])
        neighbors.extend(np.flatnonzero(row <= eps) for row in block)
    return neighbors


def dbscan(points: Sequence[GeoPoint], params: DbscanParams = DbscanParams()) -> ClusterAssignment:
    """DBSCAN 聚类

    核心点：eps 内（含自身）至少 min_pts 个邻居。按输入顺序选取未访问的核心点
    作为种子做广度优先扩展；边界点归属于第一个到达它的簇。
    """
    n = len(points)
    if n == 0:
        return ClusterAssignment(labels=())

    neighbors = neighbors_within(points, params.eps)
    is_core = np.array([len(nb) >= params.min_pts for nb in neighbors])

    labels = np.full(n, NOISE, dtype=int)
    next_label = 0
    for seed in range(n):
        if not is_core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = next_label
        frontier = deque([seed])
        while frontier:
            current = frontier.popleft()
            if not is_core[current]:
                continue
            for nb in neighbors[current]:
                if labels[nb] == NOISE:
                    labels[nb] = next_label
                    frontier.append(nb)
        next_label += 1

    return ClusterAssignment(labels=tuple(_relabel_by_first_member(labels)))


def _relabel_by_first_member(labels: np.ndarray) -> List[int]:
    """按首个成员的输入下标重新编号"""
    mapping: Dict[int, int] = {}
    result = []
    for label in labels.tolist():
        if label == NOISE:
            result.append(NOISE)
            continue
        if label not in mapping:
            mapping[label] = len(mapping)
        result.append(mapping[label])
    return result


def collect_source_points(d: Dataset) -> Tuple[List[int], List[GeoPoint]]:
    """按数据集顺序收集带 source_geo 的标注 (annotation_id 列表, 点列表)"""
    ids, pts = [], []
    for _, ann in d.annotations():
        if ann.source_geo is not None:
            ids.append(ann.id)
            pts.append(ann.source_geo)
    return ids, pts


def assign_clusters_to_images(
    d: Dataset, labels_by_annotation: Mapping[int, int]
) -> Tuple[Dataset, ClusterReport]:
    """把逐标注的簇标签汇总为图像的 cluster_id

    - 图像取其标注中多数的簇（平票取较小的 id），出现多个簇时记为冲突
    - 全部为 NOISE 的正样本图像、以及无标注的负样本图像，按图像顺序在真实簇之后
      依次获得单例 id

    Raises:
        ConsistencyError: 正样本图像没有任何带 source_geo 的标注
    """
    clustered = [c for c in labels_by_annotation.values() if c != NOISE]
    real_clusters = max(clustered, default=NOISE) + 1
    report = ClusterReport(clusters=real_clusters)
    next_singleton = real_clusters
    images: List[ImageRecord] = []

    for img in d.images:
        cluster: Optional[int] = None
        if img.is_positive:
            with_geo = [a for a in img.annotations if a.id in labels_by_annotation]
            if not with_geo:
                raise ConsistencyError(f"图像 {img.image_id} 有标注但没有任何带地理坐标的点")
            votes = Counter(labels_by_annotation[a.id] for a in with_geo
                            if labels_by_annotation[a.id] != NOISE)
            if votes:
                top = max(votes.values())
                cluster = min(c for c, v in votes.items() if v == top)
                if len(votes) > 1:
                    report.conflicts.append((img.image_id, dict(sorted(votes.items()))))
                    logger.warning("图像 %s 的风机属于多个簇 %s，取簇 %s",
                                   img.image_id, dict(votes), cluster)
        if cluster is None:
            cluster = next_singleton
            next_singleton += 1
            report.singletons += 1
        images.append(replace(img, cluster_id=cluster))

    return d.with_images(images), report


def cluster_dataset(
    d: Dataset, params: DbscanParams = DbscanParams()
) -> Tuple[Dataset, ClusterReport]:
    """对数据集中标注的 source_geo 聚类并回填图像 cluster_id"""
    ann_ids, pts = collect_source_points(d)
    assignment = dbscan(pts, params)
    logger.info("DBSCAN: %d 个点, %d 个簇, %d 个噪声点",
                len(pts), assignment.n_clusters, assignment.labels.count(NOISE))
    return assign_clusters_to_images(d, dict(zip(ann_ids, assignment.labels)))
