"""Closed-loop wiring: nominal policy -> barrier constraints -> scalar QP -> plant."""

from __future__ import annotations

import math

import numpy as np

from . import barrier as bar
from .dynamics import collision_stop, exit_stop, goal_stop, simulate
from .nominal_control import goto_goal
from .safety_filter import (
    DegenerateConstraint,
    FilterResult,
    HalfspaceConstraint,
    assemble_ecbf,
    assemble_hocbf,
    solve_scalar_qp,
)


def nominal_constraint(spec, state, t, params, law) -> HalfspaceConstraint:
    """Barrier constraint built purely from the model ``params``."""
    if isinstance(law, bar.HocbfChain):
        return assemble_hocbf(bar.b_chain(law, spec, state, t, params))
    bundle = bar.lie_bundle(spec, state, t, params)
    return assemble_ecbf(bundle, law, np.array([bundle.h, bundle.hdot]))


class RateTracker:
    """Causal estimate of ``dh/dt`` from the barrier values seen so far.

    Uses the three-point backward difference ``(3 h_k - 4 h_{k-1} + h_{k-2}) / (2 dt)``
    once three equally spaced samples exist and returns ``None`` before that.
    A time stamp that does not advance by ``dt`` starts a new history.
    """

    def __init__(self, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.dt = dt
        self._t: list[float] = []
        self._h: list[np.ndarray] = []

    def reset(self) -> None:
        self._t.clear()
        self._h.clear()

    def update(self, t: float, h) -> np.ndarray | None:
        if self._t and not math.isclose(t - self._t[-1], self.dt, rel_tol=1e-6, abs_tol=1e-9):
            self.reset()
        self._t.append(float(t))
        self._h.append(np.asarray(h, dtype=float))
        del self._t[:-3], self._h[:-3]
        if len(self._h) < 3:
            return None
        h0, h1, h2 = self._h
        return (3.0 * h2 - 4.0 * h1 + h0) / (2.0 * self.dt)


class FilteredController:
    """Go-to-goal policy passed through the barrier QP.

    ``estimators`` is either ``None`` (nominal-model filter) or one object per
    barrier exposing ``corrected_constraint(state, t, law, eta=None)``.
    Filtering can be switched off entirely with ``filtered=False``.

    When the scenario sets ``eta_source = "measured"`` the learned filter
    feeds the barrier rate from a :class:`RateTracker` instead of the nominal
    model.  The nominal-model filter always uses model rates.
    """

    def __init__(self, scenario, estimators=None, filtered=True):
        self.scenario = scenario
        self.estimators = estimators
        self.filtered = filtered
        if estimators is not None and len(estimators) != len(scenario.barriers):
            raise ValueError("need one estimator per barrier")
        measured = estimators is not None and getattr(scenario, "eta_source", "model") == "measured"
        self.tracker = RateTracker(scenario.dt) if measured else None

    def reset(self) -> None:
        if self.tracker is not None:
            self.tracker.reset()

    def constraints(self, t, state):
        sc = self.scenario
        if self.estimators is None:
            return [nominal_constraint(b, state, t, sc.nominal, sc.law) for b in sc.barriers]
        rates = None
        if self.tracker is not None:
            rates = self.tracker.update(t, [bar.h_value(b, state, t) for b in sc.barriers])
        if rates is None:
            return [est.corrected_constraint(state, t, sc.law) for est in self.estimators]
        return [
            est.corrected_constraint(state, t, sc.law, eta=np.array([bar.h_value(est.spec, state, t), rate]))
            for est, rate in zip(self.estimators, rates)
        ]

    def __call__(self, t, state) -> FilterResult:
        sc = self.scenario
        nominal = goto_goal(state, sc.goal, sc.k_theta, sc.omega_max)
        if not self.filtered:
            return FilterResult(nominal, True, False, math.nan)
        cons = self.constraints(t, state)
        box = (-sc.omega_max, sc.omega_max)
        try:
            return solve_scalar_qp(nominal, cons, box)
        except DegenerateConstraint:
            # radial heading: no omega can help at this instant
            slack = min(c.slack(nominal) for c in cons)
            return FilterResult(nominal, False, False, slack)


def barrier_values(scenario):
    barriers = scenario.barriers

    def values(t, state):
        return np.array([bar.h_value(b, state, t) for b in barriers])

    return values


def stop_predicates(scenario, collision=True):
    preds = [goal_stop(scenario.goal.center, scenario.goal.half_width), exit_stop(scenario.workspace)]
    if collision:
        preds.append(collision_stop())
    return preds


def rollout(scenario, initial, estimators=None, filtered=True, max_steps=None):
    """Run the TRUE plant from ``initial`` under the selected filter."""
    return simulate(
        initial,
        FilteredController(scenario, estimators, filtered),
        scenario.true,
        scenario.dt,
        scenario.max_steps if max_steps is None else max_steps,
        stop_predicates(scenario),
        barrier_values(scenario),
    )


def sample_initial_states(region, n, rng) -> np.ndarray:
    """Uniform positions in ``region = (xmin, xmax, ymin, ymax)``, headings on ``(-pi, pi]``."""
    xmin, xmax, ymin, ymax = region
    xs = rng.uniform(xmin, xmax, n)
    ys = rng.uniform(ymin, ymax, n)
    th = -rng.uniform(-math.pi, math.pi, n)  # maps [-pi, pi) onto (-pi, pi]
    return np.column_stack([xs, ys, th])
