"""A circle drifting right across the robot's path.

The learned filter reads the obstacle-relative position and uses the
measured barrier rate, so it no longer trusts the model's estimate of how
fast the gap is closing. Trains for about a minute.
"""

import numpy as np

from hocbf.closed_loop import rollout
from hocbf.residual_learner import learn_cbf
from hocbf.scenario import load_bundled

sc = load_bundled("experiment3")
ob = sc.barriers[0]
print(f"obstacle starts at {ob.center}, radius {ob.radius}, velocity {ob.velocity}")

trained = learn_cbf(sc)
x0 = (-2.5, -2.5, 0.0)
for label, est in (("model-based", None), ("learned", trained.estimators)):
    log = rollout(sc, x0, est)
    k = int(np.argmin(log.h[:, 0]))
    print(f"{label:>11}: {log.reason:<9} closest h {log.min_h:+.4f} at t = {log.t[k]:.1f}s")
