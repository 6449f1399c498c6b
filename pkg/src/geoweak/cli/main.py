"""命令行接口 - 使用 Rich 美化输出

退出码：0 成功，1 数据/校验错误，2 I/O 或格式错误。
"""
import functools
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import click
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.prompt import Confirm

from .. import __version__
from ..config import Config, ExperimentConfig, get_config, load_experiment_config, set_config
from ..core.evaluator import EvalConfig, evaluate
from ..core.geocluster import DbscanParams, cluster_dataset, dbscan
from ..core.splitter import (
    WeakSource, attach_source_points, check_split_consistency, default_region_rules,
    derive_weak_labels, retention_filter, sample_label_fractions, split_by_region,
    split_random_by_cluster, split_summary,
)
from ..core.teacher import (
    NoiseModel, merge_strong_and_pseudo, pseudo_from_predictions, provenance_counts,
    simulate_pseudo_labels,
)
from ..core.validation import validate_dataset
from ..errors import EXIT_IO, GeoweakError
from ..harness.pipeline import ARM_BASELINE, ARM_WSSOD, run_experiment
from ..harness.report import load_raw_table, render_report, rows_from_record_file
from ..harness.synthetic import generate_synthetic
from ..io.exporter import (
    export_artifacts, write_cluster_manifest, write_dataset, write_eval_outputs,
    write_point_collection, write_split_manifest,
)
from ..io.filters import filter_fair1m
from ..io.formats import ParseMode
from ..io.importer import (
    ImportResult, attach_pixel_points, load_json_object, parse_detection_dataset,
    parse_label_modes, parse_point_collection, parse_predictions, parse_split_manifest,
)
from ..log import setup_logging
from ..storage.factory import create_repository
from ..storage.repository import RunEntry
from .views import (
    EvalResultView, RunListView, run_detail_panel, split_table, validation_panel,
)

console = Console()


@dataclass
class CliContext:
    """全局选项"""
    seed: Optional[int] = None
    config_path: Optional[str] = None
    out_dir: Optional[str] = None
    lenient: Optional[bool] = None

    @property
    def parse_mode(self) -> ParseMode:
        return ParseMode.LENIENT if self.lenient else ParseMode.STRICT

    def experiment(self, seed: Optional[int] = None) -> ExperimentConfig:
        """实验配置：配置文件 + 全局选项覆盖；子命令的 --seed 优先于全局 --seed"""
        return load_experiment_config(
            self.config_path, seed=seed if seed is not None else self.seed,
            out_dir=self.out_dir, lenient=self.lenient,
        )

    def output_dir(self) -> Path:
        return Path(self.experiment().out_dir)


def handle_errors(func):
    """把业务异常转换为红色提示与对应的退出码"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except GeoweakError as e:
            console.print(f"[red]✗ {e}[/red]")
            sys.exit(e.exit_code)
        except OSError as e:
            console.print(f"[red]✗ 文件读写失败: {e}[/red]")
            sys.exit(EXIT_IO)
    return wrapper


def _load(ctx: CliContext, path: str) -> ImportResult:
    result = parse_detection_dataset(path, ctx.parse_mode)
    if result.dropped_count:
        console.print(f"[yellow]⊘ 宽松模式丢弃 {result.dropped_count} 条记录[/yellow]")
        for index, error in result.errors[:10]:
            console.print(f"  第 {index} 条: {error}")
        if len(result.errors) > 10:
            console.print(f"  ... 还有 {len(result.errors) - 10} 个错误")
    return result


seed_option = click.option("--seed", type=int, help="随机种子（优先于全局 --seed 与配置文件）")


def _parse_floats(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"需要逗号分隔的数值: {value}")


@click.group()
@click.version_option(version=__version__)
@click.option("--seed", type=int, help="随机种子（覆盖配置文件）")
@click.option("--config", "config_path", type=click.Path(), help="实验配置文件 (JSON)")
@click.option("--out-dir", help="输出目录（覆盖配置文件）")
@click.option("--strict/--lenient", "strict", default=None, help="坏记录中止 / 丢弃并计数")
@click.option("-v", "--verbose", is_flag=True, help="输出调试日志")
@click.option("--settings", type=click.Path(), help="用户设置文件（默认 ~/.geoweak/config.json）")
@click.pass_context
def cli(ctx, seed, config_path, out_dir, strict, verbose, settings):
    """geoweak - 点标注弱半监督目标检测的数据与评估工具"""
    if settings:
        set_config(Config(settings))
    setup_logging("DEBUG" if verbose else get_config().get("logging.level", "INFO"))
    ctx.obj = CliContext(
        seed=seed, config_path=config_path, out_dir=out_dir,
        lenient=None if strict is None else not strict,
    )


@cli.command()
@click.argument("dataset", type=click.Path())
@click.option("--points", type=click.Path(), help="像素点集合，附加后执行保留过滤")
@click.option("--fair1m-filter", is_flag=True, help="丢弃超过 2000×2000 或多于 100 个标注的图像")
@click.option("-o", "--output", type=click.Path(), help="规范化数据集输出路径")
@click.pass_obj
@handle_errors
def ingest(ctx: CliContext, dataset: str, points: str, fair1m_filter: bool, output: str):
    """读取并校验检测数据集"""
    result = _load(ctx, dataset)
    d = result.dataset
    if points:
        d, report = retention_filter(attach_pixel_points(d, parse_point_collection(points)))
        d = attach_source_points(d)
        console.print(f"[cyan]保留过滤:[/cyan] 保留 {report.kept_images} 张, "
                      f"丢弃 {report.dropped_images} 张, 孤立点 {report.dropped_points} 个")
    if fair1m_filter:
        d, dropped = filter_fair1m(d)
        console.print(f"[cyan]分辨率/标注数过滤:[/cyan] 丢弃 {dropped} 张图像")

    report = validate_dataset(d)
    console.print(validation_panel(report, result.dropped_count, result.clamped_ids))
    if output:
        write_dataset(d, output)
        console.print(f"[green]✓ 已写出: {output}[/green]")
    if not report.ok:
        sys.exit(1)


@cli.command()
@click.argument("source", type=click.Path())
@click.option("--eps-m", "--eps", "eps", type=float, help="邻域半径（米）")
@click.option("--min-pts", type=int, help="核心点最少邻居数（含自身）")
@click.option("--geo-points", is_flag=True, help="SOURCE 是 GeoJSON 点集合而不是数据集")
@click.pass_obj
@handle_errors
def cluster(ctx: CliContext, source: str, eps: float, min_pts: int, geo_points: bool):
    """按风电场聚类（DBSCAN + Haversine）"""
    settings = get_config()
    params = DbscanParams(
        eps=eps if eps is not None else settings.get("cluster.eps_m", 2000.0),
        min_pts=min_pts if min_pts is not None else settings.get("cluster.min_pts", 3),
    )
    out = ctx.output_dir()
    if geo_points:
        records = parse_point_collection(source)
        if not all(r.is_geo for r in records):
            raise GeoweakError("聚类需要地理点集合")
        assignment = dbscan([r.location for r in records], params)
        write_cluster_manifest(assignment.labels, out / "clusters.csv")
        console.print(f"[green]✓ {len(records)} 个点, {assignment.n_clusters} 个簇, "
                      f"{assignment.labels.count(-1)} 个噪声点 → {out / 'clusters.csv'}[/green]")
        return

    d, report = cluster_dataset(_load(ctx, source).dataset, params)
    write_dataset(d, out / "clustered.json")
    console.print(f"[green]✓ {report.clusters} 个簇, {report.singletons} 个单例图像, "
                  f"{len(report.conflicts)} 个冲突图像 → {out / 'clustered.json'}[/green]")


@cli.command()
@click.argument("dataset", type=click.Path())
@click.option("--strategy", type=click.Choice(["cluster-random", "region"]),
              default="cluster-random", help="划分策略")
@click.option("--ratios", help="train,val,test 比例（默认 0.7,0.15,0.15）")
@click.option("--meridian", type=float, help="美国东西分界经度（region 策略）")
@seed_option
@click.pass_obj
@handle_errors
def split(ctx: CliContext, dataset: str, strategy: str, ratios: str, meridian: float,
          seed: Optional[int]):
    """防泄漏的数据划分（需要已聚类的数据集）"""
    cfg = ctx.experiment(seed)
    d = _load(ctx, dataset).dataset
    if strategy == "region":
        assignment = split_by_region(
            d, default_region_rules(meridian if meridian is not None else cfg.meridian)
        )
    else:
        assignment = split_random_by_cluster(
            d, _parse_floats(ratios) if ratios else cfg.split_ratios, cfg.seed
        )
    path = write_split_manifest(assignment, Path(cfg.out_dir) / "splits.csv")
    console.print(split_table(split_summary(d, assignment), list(assignment.relocated_clusters)))
    console.print(f"[green]✓ 已写出: {path}[/green]")


@cli.command()
@click.argument("dataset", type=click.Path())
@click.option("--splits", required=True, type=click.Path(), help="划分清单 image_id,split")
@click.option("--fraction", "-f", required=True, type=float, help="强标注图像比例 (0,1]")
@click.option("--stratify/--no-stratify", default=True, help="多类别时保证每类至少一张强标注")
@click.option("--point-source", type=click.Choice(["box_center", "source_point"]),
              help="弱标注点取框中心还是投影来源点")
@seed_option
@click.pass_obj
@handle_errors
def fractions(ctx: CliContext, dataset: str, splits: str, fraction: float, stratify: bool,
              point_source: Optional[str], seed: Optional[int]):
    """采样强/弱标注图像并导出训练产物"""
    cfg = ctx.experiment(seed)
    d = _load(ctx, dataset).dataset
    assignment = parse_split_manifest(splits)
    check_split_consistency(d, assignment)
    modes = sample_label_fractions(d, assignment, fraction, cfg.seed, stratify)
    source = WeakSource(point_source or cfg.point_source)
    manifest = export_artifacts(d, assignment, modes, cfg.out_dir, source)
    console.print(f"[green]✓ 强标注 {manifest['strong_images']} 张, "
                  f"弱标注 {manifest['weak_images']} 张 → {cfg.out_dir}[/green]")


@cli.command()
@click.argument("dataset", type=click.Path())
@click.option("--splits", required=True, type=click.Path(), help="划分清单 image_id,split")
@click.option("--modes", required=True, type=click.Path(), help="标注方式清单 image_id,mode")
@click.option("--predictions", type=click.Path(), help="外部教师的预测文件（代替模拟）")
@click.option("--center-sigma", type=float, help="中心抖动标准差（对角线比例）")
@click.option("--scale-sigma", type=float, help="对数尺度抖动标准差")
@click.option("--drop-rate", type=float, help="丢弃概率")
@click.option("--point-source", type=click.Choice(["box_center", "source_point"]))
@seed_option
@click.pass_obj
@handle_errors
def pseudolabel(ctx: CliContext, dataset: str, splits: str, modes: str, predictions: str,
                center_sigma: float, scale_sigma: float, drop_rate: float, point_source: str,
                seed: Optional[int]):
    """为弱标注图像生成伪框，并与强标注图像合并为学生训练集"""
    cfg = ctx.experiment(seed)
    d = _load(ctx, dataset).dataset
    assignment = parse_split_manifest(splits)
    label_modes = parse_label_modes(modes)
    check_split_consistency(d, assignment, label_modes)

    source = WeakSource(point_source or cfg.point_source)
    strong = d.subset(label_modes.strong_ids)
    weak_truth = d.subset(label_modes.weak_ids)
    if predictions:
        pseudo = pseudo_from_predictions(derive_weak_labels(weak_truth, label_modes, source),
                                         parse_predictions(predictions), source)
    else:
        noise = NoiseModel(
            center_sigma if center_sigma is not None else cfg.center_sigma,
            scale_sigma if scale_sigma is not None else cfg.scale_sigma,
            drop_rate if drop_rate is not None else cfg.drop_rate,
            cfg.score_alpha, cfg.score_beta,
        )
        pseudo = simulate_pseudo_labels(weak_truth, noise, cfg.seed, source)
    student = merge_strong_and_pseudo(strong, pseudo)

    out = Path(cfg.out_dir)
    write_dataset(pseudo, out / "pseudo_labels.json")
    write_dataset(student, out / "student_train.json")
    counts = provenance_counts(student)
    console.print(f"[green]✓ 学生训练集: 人工 {counts['manual']} 个, "
                  f"伪标签 {counts['pseudo']} 个 → {out}[/green]")


@cli.command(name="evaluate")
@click.option("--gt", required=True, type=click.Path(), help="真值数据集")
@click.option("--preds", required=True, type=click.Path(), help="预测文件")
@click.option("--thresholds", default="0.25,0.5,0.75", help="IoU 阈值（逗号分隔）")
@click.option("--workers", type=int, default=1, help="并行线程数")
@click.pass_obj
@handle_errors
def evaluate_cmd(ctx: CliContext, gt: str, preds: str, thresholds: str, workers: int):
    """计算逐类别 AP 与 mAP"""
    try:
        eval_cfg = EvalConfig(iou_thresholds=tuple(_parse_floats(thresholds)), workers=workers)
    except ValueError as e:
        raise click.BadParameter(str(e))
    result = evaluate(parse_predictions(preds), _load(ctx, gt).dataset, eval_cfg)
    out = ctx.output_dir()
    write_eval_outputs(result, out / "eval.json", out / "eval.csv")
    console.print(EvalResultView().render(result))
    console.print(f"[green]✓ 已写出: {out / 'eval.json'}, {out / 'eval.csv'}[/green]")


@cli.command()
@click.option("--record", type=click.Path(), help="run_record.json")
@click.option("--table", type=click.Path(), help="原始 AP 表 (CSV)")
@click.option("--fraction-form", is_flag=True, help="原始 AP 表中的数值位于 [0,1]")
@click.option("--compare", nargs=2, help="对比组：ARM REFERENCE")
@click.option("-o", "--output", type=click.Path(), help="Markdown 输出路径（CSV 同名 .csv）")
@click.pass_obj
@handle_errors
def report(ctx: CliContext, record: str, table: str, fraction_form: bool, compare, output: str):
    """渲染 AP 表格与差值"""
    if bool(record) == bool(table):
        raise click.UsageError("--record 与 --table 必须且只能给出一个")
    if record:
        rows = rows_from_record_file(load_json_object(record))
        compare = compare or (ARM_WSSOD, ARM_BASELINE)
    else:
        rows = load_raw_table(table, percent=not fraction_form)
    document = render_report(rows, compare=tuple(compare) if compare else None)
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(document.markdown, encoding="utf-8")
        Path(output).with_suffix(".csv").write_text(document.csv, encoding="utf-8")
        console.print(f"[green]✓ 已写出: {output}[/green]")
    else:
        console.print(document.markdown, markup=False)


@cli.command()
@click.option("--images", "-n", type=int, help="图像数量")
@click.option("--objects", help="每张图像的框数量范围，如 1,4")
@click.option("--classes", type=int, help="类别数")
@click.option("--countries", type=int, help="国家数")
@seed_option
@click.pass_obj
@handle_errors
def synth(ctx: CliContext, images: int, objects: str, classes: int, countries: int,
          seed: Optional[int]):
    """生成合成语料（数据集 + GeoJSON 点集合）"""
    cfg = ctx.experiment(seed)
    lo, hi = cfg.synth_objects_min, cfg.synth_objects_max
    if objects:
        parts = objects.split(",")
        if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
            raise click.BadParameter(f"需要 MIN,MAX 形式: {objects}")
        lo, hi = int(parts[0]), int(parts[1])
    corpus = generate_synthetic(
        n_images=images or cfg.synth_images,
        objects_per_image=(lo, hi),
        n_classes=classes or cfg.synth_classes,
        n_countries=countries or cfg.synth_countries,
        farm_spread_m=cfg.synth_farm_spread_m,
        seed=cfg.seed,
        images_per_farm=cfg.synth_images_per_farm,
        negative_fraction=cfg.synth_negative_fraction,
    )
    out = Path(cfg.out_dir)
    write_dataset(corpus.dataset, out / "synthetic.json")
    write_point_collection([p.location for p in corpus.points],
                           [p.class_id for p in corpus.points], out / "points.geojson")
    counts = corpus.dataset.counts()
    console.print(f"[green]✓ {counts['images']} 张图像, {counts['boxes']} 个框, "
                  f"{corpus.farms} 个风电场 → {out}[/green]")


@cli.command()
@click.option("--fractions", "fraction_list", help="标注比例（逗号分隔，覆盖配置）")
@click.option("--predictions", help="外部预测文件模板，可含 {fraction}")
@click.option("--no-record", is_flag=True, help="不写入运行记录")
@click.pass_obj
@handle_errors
def run(ctx: CliContext, fraction_list: str, predictions: str, no_record: bool):
    """运行完整实验流水线"""
    cfg = ctx.experiment()
    updates = {}
    if fraction_list:
        updates["fractions"] = _parse_floats(fraction_list)
    if predictions:
        updates["predictions_path"] = predictions
    if updates:
        cfg = load_experiment_config(None, **{**cfg.model_dump(), **updates})

    repository = None if no_record else create_repository()
    entry = RunEntry(config_hash=cfg.config_hash(), out_dir=str(Path(cfg.out_dir).resolve()))
    if repository:
        repository.save(entry)
    try:
        record = run_experiment(cfg)
    except GeoweakError as e:
        if repository:
            entry.fail(str(e))
            repository.save(entry)
        raise
    if repository:
        entry.finish(record.summary())
        repository.save(entry)

    for f in record.fractions:
        for arm in sorted(f.results):
            console.print(EvalResultView().render(
                f.results[arm], title=f"{arm} @ {f.fraction:.0%}"
            ))
    console.print(Panel(
        f"[cyan]配置哈希:[/cyan] {record.config_hash[:12]}\n"
        f"[cyan]划分:[/cyan] {record.split_counts}\n"
        f"[cyan]输出:[/cyan] {cfg.out_dir}",
        title="[bold]实验完成[/bold]", border_style="green", box=box.ROUNDED,
    ))


@cli.command()
@click.option("--limit", type=int, default=20, help="最多显示条数")
@click.option("--hash", "config_hash", help="按配置哈希过滤")
@click.option("--show", "show_id", type=int, help="显示指定运行记录的详情")
@click.option("--delete", "delete_id", type=int, help="删除指定运行记录")
@click.option("--yes", "-y", is_flag=True, help="删除时不再确认")
@handle_errors
def runs(limit: int, config_hash: str, show_id: Optional[int], delete_id: Optional[int],
         yes: bool):
    """列出、查看或删除运行记录"""
    if show_id is not None and delete_id is not None:
        raise click.UsageError("--show 与 --delete 不能同时使用")
    repository = create_repository()

    if show_id is not None:
        entry = repository.get_by_id(show_id)
        if entry is None:
            console.print(f"[red]✗ 运行记录 #{show_id} 不存在[/red]")
            sys.exit(1)
        console.print(run_detail_panel(entry))
        return

    if delete_id is not None:
        if not yes and not Confirm.ask(f"[yellow]确认删除运行记录 #{delete_id}？[/yellow]"):
            console.print("[dim]已取消[/dim]")
            return
        if not repository.delete(delete_id):
            console.print(f"[red]✗ 运行记录 #{delete_id} 不存在[/red]")
            sys.exit(1)
        console.print(f"[green]✓ 运行记录 #{delete_id} 已删除[/green]")
        return

    entries = repository.list_all(config_hash=config_hash, limit=limit)
    if not entries:
        console.print("[yellow]没有运行记录[/yellow]")
        return
    console.print(RunListView().render(entries))


@cli.group()
def config():
    """用户设置管理"""
    pass


@config.command(name="show")
def config_show():
    """显示当前设置"""
    cfg = get_config()
    info = f"[bold cyan]设置文件:[/bold cyan] {cfg.config_path}\n"
    info += json.dumps(cfg.config, indent=2, ensure_ascii=False)
    console.print(Panel(info, title="[bold]配置信息[/bold]", border_style="cyan",
                        box=box.ROUNDED))


@config.command(name="set")
@click.argument("key")
@click.argument("value")
def config_set(key: str, value: str):
    """设置配置项（KEY 为点号路径，VALUE 按 JSON 解析，失败时作为字符串）"""
    try:
        parsed = json.loads(value)
    except ValueError:
        parsed = value
    get_config().set(key, parsed)
    console.print(f"[green]✓ {key} = {parsed!r}[/green]")


if __name__ == "__main__":
    cli()
