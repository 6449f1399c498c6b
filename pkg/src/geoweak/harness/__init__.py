"""实验编排：合成语料、端到端流水线与报告"""
from .pipeline import RunRecord, run_experiment
from .report import render_report
from .synthetic import generate_synthetic

__all__ = ["RunRecord", "run_experiment", "render_report", "generate_synthetic"]
