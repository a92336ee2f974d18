"""Suites: threshold sweep, adaptation comparison, metrics files."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from scipy.stats import binomtest

from ..errors import EmptySuite, InsufficientData
from .loop import MODES, SIG_DIGITS, TaskReport, round_sig, run_task

CHANGE_LABELS = ("relocation", "removal", "addition")


def _run_one(args):
    scenario, mode = args
    return run_task(scenario, mode)


def run_many(jobs, workers: int = 1) -> list:
    """``run_task`` over ``(scenario, mode)`` jobs, results in job order."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) < 2:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=4))


def triggers(trace, tau: float, persistence: int) -> bool:
    """True when ``persistence`` consecutive D values exceed ``tau``."""
    run = 0
    for _, d in trace:
        run = run + 1 if d > tau else 0
        if run >= persistence:
            return True
    return False


def sweep_tau(suite, taus, workers: int = 1, mode: str = "initial"):
    """TPR / FPR / F1 of the persistence trigger per threshold.

    Each scenario runs once with patching disabled, so every threshold is
    judged on the same discrepancy traces.  Returns ``(rows, reports)``.
    """
    suite = list(suite)
    if not suite:
        raise EmptySuite("sweep needs at least one scenario")
    changed = [s.label in CHANGE_LABELS for s in suite]
    if not any(changed) or all(changed):
        raise InsufficientData("sweep needs both changed and unchanged scenarios")
    reports = run_many([(s, mode) for s in suite], workers)
    rows = []
    for tau in taus:
        tp = fp = fn = tn = 0
        for s, rep, ch in zip(suite, reports, changed):
            hit = triggers(rep.D_trace, tau, s.params.discrepancy.persistence_ticks)
            if ch:
                tp, fn = tp + hit, fn + (not hit)
            else:
                fp, tn = fp + hit, tn + (not hit)
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        rows.append({"tau": float(tau), "TPR": tp / (tp + fn), "FPR": fp / (fp + tn), "F1": f1,
                     "TP": tp, "FP": fp, "FN": fn, "TN": tn})
    return rows, reports


def success_interval(k: int, n: int):
    """Exact (Clopper-Pearson) 95% interval for a success proportion."""
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="exact")
    return float(ci.low), float(ci.high)


def eval_adaptation(suite, modes=MODES, workers: int = 1, min_per_label: int = 30):
    """Success rate per change type and memory mode.  Returns ``(rows, reports)``.

    Removal counts as solved only by a correct removed-report, as adjudicated.
    """
    suite = [s for s in suite if s.label in CHANGE_LABELS]
    if not suite:
        raise EmptySuite("no relocation, removal or addition scenarios in the suite")
    for label in CHANGE_LABELS:
        n = sum(s.label == label for s in suite)
        if 0 < n < min_per_label:
            raise InsufficientData(f"{label}: {n} scenarios, need at least {min_per_label}")
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode '{m}'")
    jobs = [(s, m) for s in suite for m in modes]
    reports = run_many(jobs, workers)
    rows = []
    for label in CHANGE_LABELS:
        for m in modes:
            hits = [r.success for (s, mm), r in zip(jobs, reports) if s.label == label and mm == m]
            if not hits:
                continue
            k, n = int(sum(hits)), len(hits)
            lo, hi = success_interval(k, n)
            rows.append({"change": label, "mode": m, "n": n, "successes": k, "rate": k / n,
                         "ci_low": lo, "ci_high": hi})
    return rows, reports


def paired_dominance(reports, better: str, worse: str) -> bool:
    """``better`` solves at least as many of the same scenarios as ``worse``, per change type."""
    by = {}
    for r in reports:
        by.setdefault((r.label, r.mode), []).append(r.success)
    for label in CHANGE_LABELS:
        if (label, better) in by and (label, worse) in by and sum(by[(label, better)]) < sum(by[(label, worse)]):
            return False
    return True


# --- metrics files ---------------------------------------------------------


REPORT_COLUMNS = ("scenario", "label", "mode", "seed", "outcome", "claim", "success", "reason", "ticks",
                  "updates_triggered", "path_length", "retries", "registration_residual",
                  "penetration_m", "max_D", "stance_x", "stance_y", "stance_theta",
                  "i_col", "i_ik", "i_stab", "clearance_m", "reach_m", "stability_margin_m")


def _flat(r: TaskReport) -> dict:
    st = r.final_stance or {}
    diag = r.ips_diag or {}
    return {
        "scenario": r.scenario, "label": r.label, "mode": r.mode, "seed": r.seed,
        "outcome": r.outcome, "claim": r.claim, "success": int(r.success), "reason": r.reason, "ticks": r.ticks,
        "updates_triggered": r.updates_triggered, "path_length": r.path_length, "retries": r.retries,
        "registration_residual": r.registration_residual, "penetration_m": r.penetration_m,
        "max_D": max((d for _, d in r.D_trace), default=None),
        "stance_x": st.get("x"), "stance_y": st.get("y"), "stance_theta": st.get("theta"),
        **{k: diag.get(k) for k in ("i_col", "i_ik", "i_stab", "clearance_m", "reach_m", "stability_margin_m")},
    }


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.{SIG_DIGITS}g}"
    return str(v)


def report_document(r: TaskReport) -> str:
    return json.dumps(round_sig(r.to_dict()), sort_keys=True)


def parse_report(line: str) -> TaskReport:
    return TaskReport.from_dict(json.loads(line))


def table_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def emit_metrics(reports, path, fmt: str = "jsonl") -> Path:
    """Write one JSON document per run (``jsonl``) or one CSV row per run (``csv``)."""
    reports = list(reports)
    if not reports:
        raise EmptySuite("no reports to write")
    path = Path(path)
    if fmt == "jsonl":
        text = "".join(report_document(r) + "\n" for r in reports)
    elif fmt == "csv":
        text = table_text([_flat(r) for r in reports], REPORT_COLUMNS)
    else:
        raise ValueError(f"unknown metrics format '{fmt}'")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def load_reports(path) -> list:
    return [parse_report(line) for line in Path(path).read_text().splitlines() if line.strip()]
