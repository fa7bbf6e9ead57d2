"""Why the damping function must be Lipschitz.

Along x' = -1, the barrier h = k x**1.5 satisfies h' = -h**(1/3) exactly,
so the barrier inequality holds with the class-K function z**(1/3). Yet h
still hits zero at t = x0. With the Lipschitz choice h' = -h the barrier
only decays exponentially.
"""

from hocbf.barrier import counterexample_h, demo_lipschitz_alpha, demo_nonlipschitz_alpha

for x0 in (0.25, 1.0, 4.0):
    h0 = counterexample_h(x0)
    t_hit = demo_nonlipschitz_alpha(x0, 1e-3)
    low = demo_lipschitz_alpha(h0, 1e-3, 10 * x0)
    print(f"x0 = {x0:4}: h(0) = {h0:.4f}, cube-root damping reaches 0 at t = {t_hit:.3f}; "
          f"linear damping stays at {low:.2e} after {10 * x0:.1f}s")
