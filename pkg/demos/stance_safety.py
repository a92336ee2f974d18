"""
Interaction pose safety
=======================

A stance is accepted only when the body spheres clear the scene, the arm
reaches the grasp point without passing through anything, and the centre
of mass sits inside the eroded support polygon.  Micro-adjustment searches
rings of nearby stances when the first guess fails.
"""

import numpy as np

from mif.geometry import box, cylinder, merge
from mif.ips import StancePose, ips, micro_adjust_stance

table = box((1.2, 0.7, 0.75), (0.0, 0.0, 0.375))
chair = cylinder(0.2, 0.9, 16, (-0.85, 0.35, 0.45))
scene = merge([table, chair])
mug = np.array([-0.3, 0.1, 0.8])

for pose in (StancePose(-0.9, 0.0, 0.0), StancePose(-0.75, 0.1, 0.0), StancePose(-1.8, 0.0, 0.0)):
    ok, d = ips(pose, scene, mug)
    print(f"stance ({pose.x:+.2f}, {pose.y:+.2f}): ok={ok} collision-free={d.i_col} reach={d.i_ik} "
          f"stable={d.i_stab} clearance {d.clearance_m:.3f} m, reach {d.reach_m:.3f} m")

###############################################################################
# Starting from a colliding guess, the search returns the first safe stance.

safe = micro_adjust_stance(StancePose(-0.75, 0.1, 0.0), scene, mug)
ok, d = ips(safe, scene, mug)
print(f"adjusted to ({safe.x:+.3f}, {safe.y:+.3f}, {np.degrees(safe.theta):.0f} deg), clearance {d.clearance_m:.3f} m")
