"""
Adapting to a changed room
==========================

The same relocation scenario runs with three memory modes.  A static map
sends the robot to the old spot; the full loop notices the discrepancy on
the way, patches its graph and reaches the mug where it now is.
"""

from pathlib import Path

from mif.harness import run_task
from mif.simworld import generate_scenario, load_scenario

scn = load_scenario(Path(__file__).resolve().parents[1] / "scenarios" / "example_relocation.json")
for mode in ("static", "initial", "full"):
    rep = run_task(scn, mode)
    peak = max((d for _, d in rep.D_trace), default=0.0)
    print(f"{mode:8s} success={rep.success!s:5s} updates={rep.updates_triggered} ticks={rep.ticks:3d} "
          f"peak D={peak:.2f}  {rep.reason}")

###############################################################################
# Removal and addition scenarios from the generator.

for label in ("removal", "addition"):
    s = load_scenario(generate_scenario(3, label))
    for mode in ("static", "full"):
        rep = run_task(s, mode)
        print(f"{label:8s} {mode:6s} outcome={rep.outcome:15s} {rep.reason}")
