"""Stage orchestration: training loops, stage functions, reports."""

from .report import collect_summaries, emit_report, format_table, write_mask, write_table
from .runner import StagePipeline
from .stages import check_compatible, evaluate, run_baseline, run_stage1, run_stage2, run_stage3
from .strategies import STRATEGIES, UpdateStrategy, make_strategy
from .trainer import Trainer, accuracy

__all__ = [
    "STRATEGIES",
    "StagePipeline",
    "Trainer",
    "UpdateStrategy",
    "accuracy",
    "check_compatible",
    "collect_summaries",
    "emit_report",
    "evaluate",
    "format_table",
    "make_strategy",
    "run_baseline",
    "run_stage1",
    "run_stage2",
    "run_stage3",
    "write_mask",
    "write_table",
]
