"""Command-line entry point.

Exit codes: 0 success, 1 task failure, 2 input error.  ``MIF_SEED``
overrides the seed of single-scenario commands.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..errors import MIFError
from ..simworld import World, load_scenario, load_suite, write_suite
from ..spatial import SceneGraph, match_nodes, total_discrepancy
from .experiments import emit_metrics, eval_adaptation, paired_dominance, sweep_tau, table_text
from .loop import MODES, run_task
from .memory import build_memory

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _scenario(path, seed=None):
    scn = load_scenario(path)
    env = os.environ.get("MIF_SEED")
    if seed is not None:
        scn = scn.with_seed(seed)
    elif env:
        try:
            scn = scn.with_seed(int(env))
        except ValueError:
            raise MIFError(f"MIF_SEED must be an integer, got {env!r}")
    return scn


def _modes(text):
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"modes must be drawn from {','.join(MODES)}")
    return modes


def _floats(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("need at least one value")
    return vals


def cmd_run(a):
    rep = run_task(_scenario(a.scenario, a.seed), a.mode)
    if a.out:
        emit_metrics([rep], a.out)
    print(json.dumps({k: v for k, v in rep.to_dict().items() if k != "D_trace"}, indent=1))
    return EXIT_OK if rep.success else EXIT_FAIL


def cmd_eval_ips(a):
    rep = run_task(_scenario(a.scenario, a.seed), "full")
    print(json.dumps({"success": rep.success, "reason": rep.reason, "final_stance": rep.final_stance,
                      "ips": rep.ips_diag, "retries": rep.retries, "penetration_m": rep.penetration_m}, indent=1))
    ok = rep.success and rep.ips_diag is not None and all(rep.ips_diag[k] for k in ("i_col", "i_ik", "i_stab"))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(a):
    rows, _ = sweep_tau(load_suite(a.suite), a.taus, workers=a.workers)
    text = table_text(rows, ("tau", "TPR", "FPR", "F1", "TP", "FP", "FN", "TN"))
    if a.out:
        Path(a.out).parent.mkdir(parents=True, exist_ok=True)
        Path(a.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_eval(a):
    rows, reports = eval_adaptation(load_suite(a.suite), a.modes, workers=a.workers, min_per_label=a.min_per_label)
    text = table_text(rows, ("change", "mode", "n", "successes", "rate", "ci_low", "ci_high"))
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        emit_metrics(reports, out / "runs.jsonl")
        emit_metrics(reports, out / "runs.csv", fmt="csv")
        (out / "summary.csv").write_text(text)
    print(text, end="")
    order = [m for m in MODES if m in a.modes]
    for better, worse in zip(order[::-1], order[::-1][1:]):
        if not paired_dominance(reports, better, worse):
            print(f"warning: {better} solved fewer scenarios than {worse}", file=sys.stderr)
    return EXIT_OK


def _graph_doc(path):
    text = Path(path).read_text()
    doc = json.loads(text)
    if "nodes" in doc:
        return SceneGraph.from_dict(doc)
    # a scenario: the stored graph its mapping pass produces
    return build_memory(World(_scenario(path))).graph


def cmd_graph(a):
    if a.action == "dump":
        if len(a.files) != 1:
            raise MIFError("graph dump takes exactly one scenario or graph file")
        text = _graph_doc(a.files[0]).dumps()
        if a.out:
            Path(a.out).write_text(text)
        print(text)
        return EXIT_OK
    if len(a.files) != 2:
        raise MIFError("graph diff takes two files")
    local, stored = (_graph_doc(f) for f in a.files)
    m = match_nodes(local, stored)
    d = total_discrepancy(local, stored, m)
    print(json.dumps({"D": d, "matched": len(m.pairs), "unmatched_local": list(m.unmatched_local),
                      "unmatched_global": list(m.unmatched_global)}))
    return EXIT_OK


def cmd_validate(a):
    scn = _scenario(a.scenario)
    World(scn)      # also resolves every mesh asset
    print(f"ok: {len(scn.objects)} objects, {len(scn.events)} events, {len(scn.rooms)} rooms")
    return EXIT_OK


def cmd_make_suite(a):
    counts = {"relocation": a.per_label, "removal": a.per_label, "addition": a.per_label,
              "unchanged": a.unchanged if a.unchanged is not None else a.per_label}
    out = write_suite(a.directory, counts, seed0=a.seed0, stress_unchanged=a.stress_unchanged)
    print(f"wrote {sum(counts.values())} scenarios to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mif", description="Memory-updating navigation and safe interaction in simulated rooms.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one task")
    r.add_argument("scenario")
    r.add_argument("--mode", choices=MODES, default="full")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="write the run report (JSON lines) here")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep-tau", help="TPR/FPR of the update trigger over thresholds")
    s.add_argument("suite")
    s.add_argument("--taus", type=_floats, required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sweep)

    e = sub.add_parser("eval-adaptation", help="success rates per change type and memory mode")
    e.add_argument("suite")
    e.add_argument("--modes", type=_modes, default=MODES)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--min-per-label", type=int, default=30)
    e.add_argument("--out", help="directory for runs.jsonl, runs.csv and summary.csv")
    e.set_defaults(fn=cmd_eval)

    i = sub.add_parser("eval-ips", help="run in full mode and report the stance safety terms")
    i.add_argument("scenario")
    i.add_argument("--seed", type=int)
    i.set_defaults(fn=cmd_eval_ips)

    g = sub.add_parser("graph", help="dump a stored graph or diff two graphs")
    g.add_argument("action", choices=("dump", "diff"))
    g.add_argument("files", nargs="+")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_graph)

    v = sub.add_parser("validate", help="check a scenario document")
    v.add_argument("scenario")
    v.set_defaults(fn=cmd_validate)

    m = sub.add_parser("make-suite", help="generate a labelled scenario suite")
    m.add_argument("directory")
    m.add_argument("--per-label", type=int, default=30)
    m.add_argument("--unchanged", type=int)
    m.add_argument("--seed0", type=int, default=0)
    m.add_argument("--stress-unchanged", action="store_true")
    m.set_defaults(fn=cmd_make_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (MIFError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"mif: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
