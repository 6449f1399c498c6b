"""报告渲染：数据集 × 标注比例 × IoU 阈值的 AP 表格与差值

AP 以百分数显示、保留一位小数；差值按十进制做“远离零”的四舍五入。
"""
import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from jinja2 import Environment, FileSystemLoader

from ..errors import DataFormatError, GeoweakError

templates_dir = Path(__file__).parent / "templates"
_env = Environment(loader=FileSystemLoader(str(templates_dir)), keep_trailing_newline=True)

DEFAULT_THRESHOLDS = (0.25, 0.5, 0.75)


class ReportError(GeoweakError):
    """报告输入不一致（如对比组的行集合不同）"""


def fraction_label(fraction: float) -> str:
    """0.1 -> '10pct'，0.005 -> '0.5pct'"""
    return f"{fraction * 100:g}pct"


def round_display(x: Union[float, Decimal], ndigits: int = 1) -> Decimal:
    """十进制四舍五入（远离零）"""
    value = x if isinstance(x, Decimal) else Decimal(repr(float(x)))
    return value.quantize(Decimal(1).scaleb(-ndigits), rounding=ROUND_HALF_UP)


def format_ap(x: float) -> str:
    return f"{round_display(x)}"


def format_delta(new: float, old: float) -> str:
    """带符号的差值，如 '+3.9'、'+0.0'、'-1.1'"""
    delta = round_display(Decimal(repr(float(new))) - Decimal(repr(float(old))))
    if delta == 0:
        return "+0.0"
    return f"+{delta}" if delta > 0 else f"{delta}"


@dataclass(frozen=True)
class ApRow:
    """一行：数据集（或对比组）、标注比例标签、各阈值 AP（百分数）"""
    dataset: str
    fraction: str
    values: Tuple[float, ...]


@dataclass(frozen=True)
class ReportDocument:
    markdown: str
    csv: str


def rows_from_record(record, thresholds: Optional[Sequence[float]] = None) -> List[ApRow]:
    """把 RunRecord 展开为表格行（每个对比组一个“数据集”）"""
    rows = []
    for f in record.fractions:
        for arm in sorted(f.results):
            result = f.results[arm]
            ts = thresholds or result.thresholds
            rows.append(ApRow(arm, fraction_label(f.fraction),
                              tuple(100.0 * result.mean_ap[t] for t in ts)))
    return rows


def load_raw_table(path: Union[str, Path], percent: bool = True,
                   thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> List[ApRow]:
    """读取原始 AP 表：dataset,fraction,iou_0.25,iou_0.5,iou_0.75

    Args:
        percent: 表中数值已是百分数；否则视为 [0,1] 并乘以 100
    """
    columns = [f"iou_{t:g}" for t in thresholds]
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            if header[:2] != ["dataset", "fraction"] or any(c not in header for c in columns):
                raise DataFormatError(f"AP 表头必须是 dataset,fraction,{','.join(columns)}")
            raw = list(reader)
    except UnicodeDecodeError as e:
        raise DataFormatError(f"不是 UTF-8 文本: {path}: {e}") from e
    except OSError as e:
        raise DataFormatError(f"读取文件失败: {path}: {e}") from e

    scale = 1.0 if percent else 100.0
    limit = 100.0 if percent else 1.0
    rows = []
    for line, row in enumerate(raw, start=2):
        try:
            values = tuple(float(row[c]) for c in columns)
        except (TypeError, ValueError) as e:
            raise DataFormatError(f"第 {line} 行含有无效数值: {e}") from e
        if any(not 0.0 <= v <= limit for v in values):
            raise DataFormatError(f"第 {line} 行 AP 超出 [0, {limit:g}]")
        rows.append(ApRow(row["dataset"], row["fraction"], tuple(v * scale for v in values)))
    return rows


def fraction_deltas(rows: Sequence[ApRow]) -> List[Dict[str, object]]:
    """同一数据集内相邻标注比例之间的差值（按输入顺序）"""
    by_dataset: Dict[str, List[ApRow]] = {}
    for row in rows:
        by_dataset.setdefault(row.dataset, []).append(row)
    deltas = []
    for dataset, group in by_dataset.items():
        for old, new in zip(group, group[1:]):
            deltas.append({
                "dataset": dataset,
                "label": f"{old.fraction} → {new.fraction}",
                "cells": [format_delta(n, o) for n, o in zip(new.values, old.values)],
            })
    return deltas


def arm_deltas(rows: Sequence[ApRow], arm: str, reference: str) -> List[Dict[str, object]]:
    """同一标注比例下两组之间的差值 arm − reference

    Raises:
        ReportError: 两组的标注比例集合不一致
    """
    a = {r.fraction: r for r in rows if r.dataset == arm}
    b = {r.fraction: r for r in rows if r.dataset == reference}
    if set(a) != set(b):
        raise ReportError(
            f"{arm} 与 {reference} 的行不一致: {sorted(a)} vs {sorted(b)}"
        )
    order = [r.fraction for r in rows if r.dataset == arm]
    return [
        {
            "dataset": f"{arm} vs {reference}",
            "label": fraction,
            "cells": [format_delta(n, o) for n, o in zip(a[fraction].values,
                                                          b[fraction].values)],
        }
        for fraction in order
    ]


def render_report(
    rows: Sequence[ApRow],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    compare: Optional[Tuple[str, str]] = None,
    title: str = "AP results",
) -> ReportDocument:
    """渲染 Markdown 表格文档与 CSV

    Raises:
        ReportError: 行的取值个数与阈值不符，或对比组的行集合不一致
    """
    for row in rows:
        if len(row.values) != len(thresholds):
            raise ReportError(f"{row.dataset}/{row.fraction} 的取值个数与阈值个数不符")

    comparisons = arm_deltas(rows, *compare) if compare else []
    markdown = _env.get_template("report.md.j2").render(
        title=title,
        thresholds=[f"{t:g}" for t in thresholds],
        rows=[
            {"dataset": r.dataset, "fraction": r.fraction,
             "cells": [format_ap(v) for v in r.values]}
            for r in rows
        ],
        fraction_deltas=fraction_deltas(rows),
        comparisons=comparisons,
    )

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["dataset", "fraction"] + [f"iou_{t:g}" for t in thresholds])
    for r in rows:
        writer.writerow([r.dataset, r.fraction] + [format_ap(v) for v in r.values])
    return ReportDocument(markdown=markdown, csv=buffer.getvalue())


def rows_from_record_file(data: Dict[str, object]) -> List[ApRow]:
    """从 run_record.json 的内容展开表格行"""
    try:
        rows = []
        for f in data["fractions"]:
            for arm in sorted(f["results"]):
                result = f["results"][arm]
                rows.append(ApRow(
                    arm, fraction_label(f["fraction"]),
                    tuple(100.0 * result["mean_ap"][f"{t:g}"] for t in result["thresholds"]),
                ))
        return rows
    except (KeyError, TypeError) as e:
        raise DataFormatError(f"无法识别的运行记录: {e}") from e
