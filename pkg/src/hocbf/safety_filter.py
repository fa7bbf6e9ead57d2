"""Minimum-perturbation filtering of a scalar control.

With a single input every barrier condition is a half-line ``a * omega >= b``,
so the QP ``min 0.5 (omega - nominal)**2`` reduces to clamping the nominal
value into the intersection interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEGENERATE_TOL = 1e-12


class DegenerateConstraint(ValueError):
    """A constraint with vanishing ``a`` and positive ``b`` (no omega satisfies it)."""


class NoFeasibleGridPoint(ValueError):
    pass


@dataclass(frozen=True)
class HalfspaceConstraint:
    """Encodes ``a * omega >= b``."""

    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"constraint coefficients must be finite, got a={self.a}, b={self.b}")

    def slack(self, omega: float) -> float:
        return self.a * omega - self.b


@dataclass(frozen=True)
class FilterResult:
    omega_safe: float
    feasible: bool
    active: bool
    slack: float


def assemble_ecbf(bundle, gain, eta) -> HalfspaceConstraint:
    """``hddot_drift + input_coeff * omega >= -K . eta`` as a half-line."""
    k_eta = float(np.dot(gain.K, eta))
    return HalfspaceConstraint(bundle.input_coeff, -k_eta - bundle.hddot_drift)


def assemble_hocbf(terms) -> HalfspaceConstraint:
    """Half-line form of ``drift + input_coeff * omega >= rhs`` from :func:`barrier.b_chain`."""
    return HalfspaceConstraint(terms.input_coeff, terms.rhs - terms.drift)


def feasible_interval(constraints: Sequence[HalfspaceConstraint], box=None) -> tuple[float, float]:
    """Intersection ``[lo, hi]`` of all half-lines and the optional box.

    ``lo > hi`` signals infeasibility.  Raises :class:`DegenerateConstraint`
    for a vanishing ``a`` paired with ``b > 0``; a vanishing ``a`` with
    ``b <= 0`` is trivially satisfied and ignored.
    """
    lo, hi = (-math.inf, math.inf) if box is None else (float(box[0]), float(box[1]))
    for c in constraints:
        if abs(c.a) <= DEGENERATE_TOL:
            if c.b > 0:
                raise DegenerateConstraint(f"|a| = {abs(c.a):.3e} with b = {c.b:.6g} > 0")
            continue
        bound = c.b / c.a
        if c.a > 0:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    return lo, hi


def solve_scalar_qp(
    nominal: float,
    constraints: Sequence[HalfspaceConstraint],
    box=None,
) -> FilterResult:
    """Project ``nominal`` onto the feasible interval.

    When the interval is empty the result has ``feasible=False`` and the
    midpoint of the conflicting bounds (clipped to the box), which minimizes
    the largest bound violation.
    """
    lo, hi = feasible_interval(constraints, box)
    in_box = box is None or box[0] <= nominal <= box[1]
    if in_box and all(c.slack(nominal) >= 0 for c in constraints):
        # checked on the half-lines directly: b / a can round past a safe nominal
        return FilterResult(float(nominal), True, False, min((c.slack(nominal) for c in constraints), default=math.inf))
    if lo <= hi:
        omega = min(max(nominal, lo), hi)
        feasible = True
    else:
        omega = 0.5 * (lo + hi)
        if box is not None:
            omega = min(max(omega, box[0]), box[1])
        feasible = False
    slack = min((c.slack(omega) for c in constraints), default=math.inf)
    return FilterResult(float(omega), feasible, bool(omega != nominal), float(slack))


def brute_force_qp_oracle(
    nominal: float,
    constraints: Sequence[HalfspaceConstraint],
    box,
    grid_step: float,
) -> float:
    """Exhaustive grid search over ``box`` for the closest admissible point.

    A grid point is admissible when it lies within half a grid step of every
    half-line, i.e. ``a * w >= b - 0.5 * grid_step * |a|``.  Any nonempty
    feasible interval then contains an admissible point, and bounds that fall
    on the grid are reproduced exactly.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    lo, hi = float(box[0]), float(box[1])
    grid = lo + grid_step * np.arange(int(math.floor((hi - lo) / grid_step + 1e-9)) + 1)
    ok = np.ones(grid.shape, dtype=bool)
    for c in constraints:
        ok &= c.a * grid >= c.b - 0.5 * grid_step * abs(c.a)
    if not ok.any():
        raise NoFeasibleGridPoint("no grid point satisfies every constraint")
    cand = grid[ok]
    return float(cand[np.argmin(0.5 * (cand - nominal) ** 2)])
