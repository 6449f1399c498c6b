"""导出器：数据集、点集合、预测、清单与评估结果

所有输出都是规范化的：id 升序、固定键顺序、2 空格缩进、结尾换行，
相同输入得到逐字节相同的文件。
"""
import csv
import hashlib
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

from ..core.evaluator import EvalResult
from ..core.models import Dataset, Detection, GeoPoint, LabelMode, Split
from ..core.splitter import (
    LabelModeAssignment, SplitAssignment, WeakSource, derive_weak_labels,
)
from ..errors import ConsistencyError
from .formats import dataset_to_dict, detection_to_dict

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _write_text(path: PathLike, text: str) -> Path:
    output_file = Path(path)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    with open(output_file, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return output_file


def dumps_canonical(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def _write_json(path: PathLike, data: Any) -> Path:
    return _write_text(path, dumps_canonical(data))


def _write_csv(path: PathLike, fieldnames: Sequence[str], rows: Iterable[Mapping]) -> Path:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return _write_text(path, buffer.getvalue())


def write_dataset(d: Dataset, path: PathLike) -> Path:
    """写出检测数据集（规范化 JSON）"""
    return _write_json(path, dataset_to_dict(d))


def write_predictions(detections: Sequence[Detection], path: PathLike) -> Path:
    """写出预测文件，按 (image_id, 置信度降序, det_id) 排序"""
    ordered = sorted(
        enumerate(detections),
        key=lambda pair: (pair[1].image_id, -pair[1].score,
                          pair[1].det_id if pair[1].det_id is not None else pair[0]),
    )
    return _write_json(path, [detection_to_dict(det) for _, det in ordered])


def write_point_collection(points: Sequence[GeoPoint], class_ids: Sequence[int],
                           path: PathLike) -> Path:
    """写出 GeoJSON FeatureCollection（坐标为 [lon, lat]）"""
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
            "properties": {"category_id": class_id},
        }
        for p, class_id in zip(points, class_ids)
    ]
    return _write_json(path, {"type": "FeatureCollection", "features": features})


def write_cluster_manifest(labels: Sequence[int], path: PathLike) -> Path:
    """point_index,cluster_id；噪声点写为 -1"""
    rows = ({"point_index": i, "cluster_id": label} for i, label in enumerate(labels))
    return _write_csv(path, ["point_index", "cluster_id"], rows)


def write_split_manifest(split: SplitAssignment, path: PathLike) -> Path:
    rows = ({"image_id": i, "split": split[i].value} for i in sorted(split.mapping))
    return _write_csv(path, ["image_id", "split"], rows)


def write_label_modes(modes: LabelModeAssignment, path: PathLike) -> Path:
    rows = ({"image_id": i, "mode": modes[i].value} for i in sorted(modes.mapping))
    return _write_csv(path, ["image_id", "mode"], rows)


def write_eval_outputs(result: EvalResult, json_path: PathLike, csv_path: PathLike) -> None:
    """写出结构化评估结果与 CSV 摘要"""
    _write_json(json_path, result.to_dict())
    _write_csv(csv_path, ["threshold", "class_id", "class_name", "ap", "tp", "fp", "fn"],
               result.summary_rows())


def sha256_of(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def export_artifacts(
    d: Dataset,
    split: SplitAssignment,
    modes: LabelModeAssignment,
    out_dir: PathLike,
    source: WeakSource = WeakSource.BOX_CENTER,
) -> Dict[str, Any]:
    """写出逐划分的数据集文件与清单，返回清单字典（同时写为 manifest.json）

    训练集中弱标注图像只保留点标注（点取自 source），强标注图像保留框；其他划分保持原样。
    不在划分清单中的图像不会被写出。

    Raises:
        ConsistencyError: 清单引用了数据集中不存在的图像，或标注方式定义在非训练图像上
    """
    known = set(d.image_ids)
    for name, ids in (("划分清单", split.mapping), ("标注方式清单", modes.mapping)):
        unknown = sorted(set(ids) - known)
        if unknown:
            raise ConsistencyError(f"{name}引用了不存在的图像: {unknown[:10]}")
    not_train = sorted(i for i, m in modes.mapping.items() if split.mapping.get(i) != Split.TRAIN)
    if not_train:
        raise ConsistencyError(f"标注方式清单包含非训练集图像: {not_train[:10]}")

    out = Path(out_dir)
    labelled = derive_weak_labels(d, modes, source)
    written: List[Path] = []
    for s in Split:
        ids = split.ids_in(s)
        if not ids:
            continue
        written.append(write_dataset(labelled.subset(ids), out / f"{s.value}.json"))
    written.append(write_split_manifest(split, out / "splits.csv"))
    if len(modes):
        written.append(write_label_modes(modes, out / "label_modes.csv"))

    files = []
    for path in written:
        entry: Dict[str, Any] = {"path": path.name, "sha256": sha256_of(path)}
        if path.suffix == ".json":
            entry.update(labelled.subset(split.ids_in(Split(path.stem))).counts())
        files.append(entry)
    manifest = {
        "files": files,
        "strong_images": sum(1 for m in modes.mapping.values() if m == LabelMode.STRONG),
        "weak_images": sum(1 for m in modes.mapping.values() if m == LabelMode.WEAK),
    }
    _write_json(out / "manifest.json", manifest)
    logger.info("已导出 %d 个文件到 %s", len(files), out)
    return manifest
