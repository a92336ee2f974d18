from .experiments import (
    REPORT_COLUMNS,
    emit_metrics,
    eval_adaptation,
    load_reports,
    paired_dominance,
    parse_report,
    report_document,
    sweep_tau,
    triggers,
)
from .loop import MODES, TaskReport, run_task
from .memory import Memory, build_memory, perceive
