"""From pole locations to a gain, then one filtered control.

The scalar control makes every barrier constraint a half-line, so the
filter is a clamp of the nominal command into an interval.
"""

import numpy as np

from hocbf import barrier as bar
from hocbf.barrier import BarrierSpec, EcbfGain, pole_placement
from hocbf.dynamics import SystemParams
from hocbf.nominal_control import GoalSpec, goto_goal
from hocbf.safety_filter import HalfspaceConstraint, assemble_ecbf, solve_scalar_qp

K = EcbfGain((1.0, 6.0))
print("K = (1, 6) places poles at", np.round(np.sort(K.poles().real), 6))
print("poles (-1, -2) need K =", pole_placement([-1.0, -2.0]).K)

p = SystemParams(0.1, 0.1, 1.0)
obstacle = BarrierSpec.circle((0.0, 0.0), 1.5)
goal = GoalSpec((1.5, 1.5), 0.3)

# Skirting the obstacle while the goal bearing pulls inward.
s = np.array([-1.675, -1.341, 1.023])
nominal = goto_goal(s, goal, omega_max=1.0)
c = assemble_ecbf(bar.lie_bundle(obstacle, s, 0.0, p), K, bar.eta(obstacle, s, 0.0, p))
res = solve_scalar_qp(nominal, [c], (-1.0, 1.0))
print(f"constraint {c.a:.4f} * omega >= {c.b:.4f}")
print(f"nominal omega {nominal:+.4f} -> filtered {res.omega_safe:+.4f} (active: {res.active}, feasible: {res.feasible})")

# Two conflicting half-lines: no omega satisfies both.
res = solve_scalar_qp(0.0, [HalfspaceConstraint(1.0, 2.0), HalfspaceConstraint(-1.0, -1.0)])
print("conflicting constraints ->", res)
