"""Differential-drive kinematics in control-affine form.

The plant is the unicycle reduction of a two-wheel robot::

    x'     = r * u * cos(theta)
    y'     = r * u * sin(theta)
    theta' = (r / L) * omega

with ``omega`` (wheel-speed difference) the only control input.  States are
plain ``numpy`` arrays ``[x, y, theta]``; :class:`RobotState` is a thin named
view used where readability matters more than speed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Wheel radius ``r``, axle length ``L`` and mean wheel speed ``u``."""

    r: float
    L: float
    u: float

    def __post_init__(self):
        for name in ("r", "L", "u"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"SystemParams.{name} must be finite, got {value}")
        if self.r <= 0:
            raise ValueError(f"wheel radius r must be positive, got {self.r}")
        if self.L <= 0:
            raise ValueError(f"axle length L must be positive, got {self.L}")
        if self.u == 0:
            raise ValueError("wheel speed u must be nonzero")

    @property
    def speed(self) -> float:
        """Forward speed ``r * u`` of the robot center."""
        return self.r * self.u

    @property
    def turn_gain(self) -> float:
        """Heading rate per unit of ``omega``, i.e. ``r / L``."""
        return self.r / self.L


class RobotState(NamedTuple):
    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into ``(-pi, pi]``."""
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    # mod maps pi to -pi; move that endpoint back
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def drift(state, p: SystemParams) -> np.ndarray:
    """Control-free part ``f(x)`` of the vector field."""
    theta = state[2]
    v = p.speed
    return np.array([v * math.cos(theta), v * math.sin(theta), 0.0])


def control_direction(p: SystemParams) -> np.ndarray:
    """Input direction ``g(x)``; constant for this plant."""
    return np.array([0.0, 0.0, p.turn_gain])


def vector_field(state, omega: float, p: SystemParams) -> np.ndarray:
    """Full right-hand side written out directly (not via drift/control_direction)."""
    theta = state[2]
    v = p.r * p.u
    return np.array([v * math.cos(theta), v * math.sin(theta), p.r / p.L * omega])


def step(state, omega: float, p: SystemParams, dt: float) -> np.ndarray:
    """Advance one zero-order-hold step with classical RK4."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = np.asarray(state, dtype=float)
    k1 = vector_field(s, omega, p)
    k2 = vector_field(s + 0.5 * dt * k1, omega, p)
    k3 = vector_field(s + 0.5 * dt * k2, omega, p)
    k4 = vector_field(s + dt * k3, omega, p)
    nxt = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    nxt[2] = wrap_angle(nxt[2])
    return nxt


# --------------------------------------------------------------------------
# Rollouts
# --------------------------------------------------------------------------

@dataclass
class TrajectoryLog:
    """Uniformly sampled rollout record.

    ``h`` has one column per barrier.  ``slack`` is the filter's constraint
    slack at each step (NaN for unfiltered controllers or the final sample,
    where no control was computed).
    """

    dt: float
    t: np.ndarray
    states: np.ndarray
    omega: np.ndarray
    h: np.ndarray
    slack: np.ndarray
    feasible: np.ndarray
    reason: str = "max_steps"

    def __len__(self) -> int:
        return len(self.t)

    @property
    def min_h(self) -> float:
        if self.h.size == 0:
            return math.inf
        return float(np.min(self.h))

    def to_csv(self, path) -> None:
        n_barriers = self.h.shape[1] if self.h.ndim == 2 else 0
        header = ["t", "x", "y", "theta", "omega"]
        header += [f"h_{i}" for i in range(n_barriers)]
        header += ["slack", "reason"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            last = len(self.t) - 1
            for k in range(len(self.t)):
                row = [repr(float(self.t[k]))]
                row += [repr(float(v)) for v in self.states[k]]
                row.append(repr(float(self.omega[k])))
                row += [repr(float(v)) for v in self.h[k]] if n_barriers else []
                row.append(repr(float(self.slack[k])))
                row.append(self.reason if k == last else "")
                writer.writerow(row)


def read_trajectory_csv(path) -> dict:
    """Load a trajectory CSV back into column arrays plus the final reason."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header[:-1]):
        out[name] = np.array([float(r[j]) for r in body])
    out["reason"] = body[-1][-1] if body else ""
    return out


@dataclass
class StopPredicate:
    """Named termination test evaluated on every logged sample."""

    reason: str
    test: Callable[[float, np.ndarray, np.ndarray], bool] = field(repr=False)

    def __call__(self, t, state, h_values) -> bool:
        return bool(self.test(t, state, h_values))


def in_box(state, center, half_width) -> bool:
    return abs(state[0] - center[0]) <= half_width and abs(state[1] - center[1]) <= half_width


def goal_stop(center, half_width) -> StopPredicate:
    return StopPredicate("goal", lambda t, s, h: in_box(s, center, half_width))


def exit_stop(bounds) -> StopPredicate:
    """``bounds`` is ``(xmin, xmax, ymin, ymax)``."""
    xmin, xmax, ymin, ymax = bounds
    return StopPredicate(
        "exit", lambda t, s, h: not (xmin <= s[0] <= xmax and ymin <= s[1] <= ymax)
    )


def collision_stop() -> StopPredicate:
    return StopPredicate("collision", lambda t, s, h: len(h) > 0 and float(np.min(h)) < 0.0)


def simulate(
    initial,
    controller: Callable,
    p_true: SystemParams,
    dt: float,
    max_steps: int,
    stop: Sequence[StopPredicate] = (),
    barrier_values: Callable[[float, np.ndarray], np.ndarray] | None = None,
    t0: float = 0.0,
) -> TrajectoryLog:
    """Roll the true plant forward under ``controller``.

    ``controller(t, state)`` returns either a float or an object with
    ``omega_safe``, ``slack`` and ``feasible`` attributes (a filter result).
    ``barrier_values(t, state)`` supplies the logged h columns.  Stop
    predicates are checked in order on every sample, including the first.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    hfun = barrier_values or (lambda t, s: np.zeros(0))
    state = np.asarray(initial, dtype=float).copy()
    state[2] = wrap_angle(state[2])

    ts, xs, ws, hs, slacks, feas = [], [], [], [], [], []
    reason = "max_steps"
    t = t0
    for k in range(max_steps + 1):
        h_now = np.asarray(hfun(t, state), dtype=float)
        ts.append(t)
        xs.append(state.copy())
        hs.append(h_now)
        hit = next((p.reason for p in stop if p(t, state, h_now)), None)
        if hit is not None or k == max_steps:
            if hit is not None:
                reason = hit
            ws.append(math.nan)
            slacks.append(math.nan)
            feas.append(True)
            break
        out = controller(t, state)
        if hasattr(out, "omega_safe"):
            omega, slack, ok = float(out.omega_safe), float(out.slack), bool(out.feasible)
        else:
            omega, slack, ok = float(out), math.nan, True
        ws.append(omega)
        slacks.append(slack)
        feas.append(ok)
        state = step(state, omega, p_true, dt)
        t = t0 + (k + 1) * dt

    n_b = len(hs[0])
    return TrajectoryLog(
        dt=dt,
        t=np.array(ts),
        states=np.array(xs),
        omega=np.array(ws),
        h=np.array(hs).reshape(len(hs), n_b),
        slack=np.array(slacks),
        feasible=np.array(feas, dtype=bool),
        reason=reason,
    )
