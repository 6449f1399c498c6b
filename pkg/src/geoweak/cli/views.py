"""
结果视图模块

- 校验报告面板
- 评估结果表（逐类别、逐阈值）
- 划分统计表
- 运行记录列表与详情
"""
from typing import Dict, List, Optional

from rich import box
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from ..core.evaluator import EvalResult
from ..core.models import Split
from ..core.validation import ValidationReport
from ..storage.repository import RunEntry, RunStatus


def get_run_status_display(status: RunStatus) -> Text:
    """获取运行状态的富文本显示"""
    status_map = {
        RunStatus.RUNNING: ("🔄 运行中", "yellow"),
        RunStatus.SUCCEEDED: ("✅ 成功", "green"),
        RunStatus.FAILED: ("❌ 失败", "red"),
    }
    text, color = status_map[status]
    return Text(text, style=color)


def validation_panel(report: ValidationReport, dropped: int = 0,
                     clamped: Optional[List[int]] = None) -> Panel:
    """校验报告面板：计数、裁剪与丢弃情况、违规明细（最多 10 条）"""
    lines = [
        f"[cyan]图像:[/cyan] {report.images}",
        f"[cyan]框:[/cyan] {report.boxes}",
        f"[cyan]点:[/cyan] {report.points}",
    ]
    if dropped:
        lines.append(f"[yellow]⊘ 丢弃记录: {dropped}[/yellow]")
    if clamped:
        lines.append(f"[yellow]⚠️  裁剪到图像内的框: {len(clamped)}[/yellow]")
    if report.ok:
        lines.append("[green]✓ 校验通过[/green]")
    else:
        lines.append(f"[red]✗ {len(report.violations)} 处违规[/red]")
        for v in report.violations[:10]:
            lines.append(f"  [red]{v.kind.value}[/red] {v.message}")
        if len(report.violations) > 10:
            lines.append(f"  ... 还有 {len(report.violations) - 10} 处")
    return Panel("\n".join(lines), title="[bold]数据集校验[/bold]",
                 border_style="green" if report.ok else "red", box=box.ROUNDED)


class EvalResultView:
    """评估结果表格"""

    def render(self, result: EvalResult, title: str = "评估结果") -> Table:
        table = Table(title=title, box=box.ROUNDED, show_header=True,
                      header_style="bold magenta")
        table.add_column("类别", style="cyan")
        for t in result.thresholds:
            table.add_column(f"AP@{t:g}", justify="right")
            table.add_column(f"TP/FP/FN@{t:g}", justify="right", style="dim")

        for c in result.classes:
            cells = [result.class_names.get(c, str(c))]
            for t in result.thresholds:
                m = result.counts[(c, t)]
                cells += [f"{100 * result.ap[(c, t)]:.1f}", f"{m.tp}/{m.fp}/{m.fn}"]
            table.add_row(*cells)

        mean_cells = [f"[bold]{result.metric_name}[/bold]"]
        for t in result.thresholds:
            mean_cells += [f"[bold]{100 * result.mean_ap[t]:.1f}[/bold]", ""]
        table.add_row(*mean_cells)
        return table


def split_table(counts: Dict[Split, Dict[str, int]],
                relocated: Optional[List[int]] = None) -> Table:
    """划分统计：图像数与正样本图像数"""
    table = Table(title="数据划分", box=box.SIMPLE, header_style="bold cyan")
    table.add_column("划分")
    table.add_column("图像", justify="right")
    table.add_column("正样本", justify="right")
    for s in Split:
        table.add_row(s.value, str(counts[s]["images"]), str(counts[s]["positive"]))
    if relocated:
        table.caption = f"整体移动的跨划分簇: {len(relocated)}"
    return table


class RunListView:
    """运行记录列表"""

    def render(self, runs: List[RunEntry]) -> Table:
        table = Table(title="运行记录", box=box.ROUNDED, header_style="bold magenta")
        table.add_column("ID", style="cyan", width=5)
        table.add_column("状态", width=10)
        table.add_column("配置哈希", style="dim")
        table.add_column("输出目录")
        table.add_column("开始时间", style="blue")
        table.add_column("耗时", justify="right")

        for run in runs:
            elapsed = "-"
            if run.finished_at and run.started_at:
                elapsed = f"{(run.finished_at - run.started_at).total_seconds():.1f}s"
            table.add_row(
                str(run.id),
                get_run_status_display(run.status),
                run.config_hash[:12],
                run.out_dir,
                run.started_at.strftime("%Y-%m-%d %H:%M") if run.started_at else "-",
                elapsed,
            )
        return table


def run_detail_panel(run: RunEntry) -> Panel:
    """单条运行记录的详情面板"""
    def when(value) -> str:
        return value.strftime("%Y-%m-%d %H:%M:%S") if value else "(无)"

    details = (
        f"[bold cyan]状态:[/bold cyan] {get_run_status_display(run.status)}\n"
        f"[bold cyan]配置哈希:[/bold cyan] {run.config_hash}\n"
        f"[bold cyan]输出目录:[/bold cyan] {run.out_dir}\n"
        f"[bold cyan]开始时间:[/bold cyan] {when(run.started_at)}\n"
        f"[bold cyan]结束时间:[/bold cyan] {when(run.finished_at)}"
    )
    for arm, by_fraction in sorted(run.summary.items()):
        for label, by_threshold in by_fraction.items():
            cells = "  ".join(f"IoU {t} {100 * v:.1f}" for t, v in by_threshold.items())
            details += f"\n[bold cyan]{arm} @ {label}:[/bold cyan] {cells}"
    if run.error:
        details += f"\n[red bold]错误: {escape(run.error)}[/red bold]"
    return Panel(details, title=f"[bold]运行 #{run.id}[/bold]", border_style="cyan",
                 box=box.ROUNDED)
