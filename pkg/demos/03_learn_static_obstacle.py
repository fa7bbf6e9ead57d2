"""Learning the barrier remainder for a slower-than-modeled robot.

The model believes the wheels turn at u = 1 but the real robot runs at
u = 0.7. A filter built on the model lets many rollouts clip the obstacle;
after 40 training rollouts the corrected filter keeps all of them clear.
Takes about a minute on one core.
"""

import time

from hocbf.experiments import run_eval
from hocbf.residual_learner import learn_cbf
from hocbf.scenario import load_bundled

sc = load_bundled("experiment1_u")
print(f"model u = {sc.nominal.u}, real u = {sc.true.u}, K = {sc.law.K}")

before = run_eval(sc, None)
print(f"model-based filter: safe {before.safe_rate:.0%}, goal {before.goal_rate:.0%}, worst h {before.min_h:.4f}")

t0 = time.perf_counter()
trained = learn_cbf(sc)
losses = trained.losses[0]
print(f"trained in {time.perf_counter() - t0:.0f}s over {len(losses)} updates")
print(f"mean loss, first 500 updates {sum(losses[:500]) / 500:.2e}, last 500 {sum(losses[-500:]) / 500:.2e}")

after = run_eval(sc, trained)
print(f"learned filter: safe {after.safe_rate:.0%}, goal {after.goal_rate:.0%}, worst h {after.min_h:.4f}")
