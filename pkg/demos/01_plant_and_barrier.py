"""Differential drive plant and a circular keep-out barrier.

Walks through one integration step, the barrier's time derivatives, and
why the turn command only shows up in the second derivative.
"""

import math

import numpy as np

from hocbf import barrier as bar
from hocbf.barrier import BarrierSpec
from hocbf.dynamics import SystemParams, step

p = SystemParams(r=0.1, L=0.1, u=1.0)
obstacle = BarrierSpec.circle((0.0, 0.0), 1.5)

# Robot at (-2, -2) facing along +x.
s = np.array([-2.0, -2.0, 0.0])
print("state", s, "-> after 0.1 s turning at 0.5 rad/s:", np.round(step(s, 0.5, p, 0.1), 6))

lb = bar.lie_bundle(obstacle, s, 0.0, p)
print(f"h = {lb.h:.4f}  h' = {lb.hdot:.4f}  h'' = {lb.hddot_drift:.4f} + {lb.input_coeff:.4f} * omega")

# The first derivative carries no omega term: the input acts on heading only.
print("L_g h =", bar.lg_h(obstacle, s, 0.0, p))

# Pointing straight at the obstacle, the input coefficient of h'' vanishes too.
radial = np.array([-2.0, -2.0, math.pi / 4])
print("input coefficient when heading at the center:", bar.lie_bundle(obstacle, radial, 0.0, p).input_coeff)

# A moving obstacle adds a time partial to h'.
moving = BarrierSpec.moving_circle((-2.0, 0.0), 0.5, (0.03, 0.0))
for t in (0.0, 10.0, 20.0):
    lb = bar.lie_bundle(moving, s, t, p)
    print(f"t = {t:4.1f}  center {moving.center_at(t)}  h = {lb.h:.4f}  h' = {lb.hdot:+.5f}")
