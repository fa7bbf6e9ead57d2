"""Go-to-goal heading controller used as the nominal (unfiltered) policy."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dynamics import in_box, wrap_angle


@dataclass(frozen=True)
class GoalSpec:
    center: tuple[float, float]
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"goal half-width must be positive, got {self.half_width}")

    def contains(self, state) -> bool:
        return in_box(state, self.center, self.half_width)


def bearing_error(state, goal: GoalSpec) -> float:
    gx, gy = goal.center
    return wrap_angle(math.atan2(gy - state[1], gx - state[0]) - state[2])


def goto_goal(state, goal: GoalSpec, k_theta: float = 2.0, omega_max: float = 10.0) -> float:
    """Proportional heading law ``clamp(k_theta * bearing_error, +-omega_max)``."""
    if not k_theta > 0:
        raise ValueError("k_theta must be positive")
    omega = k_theta * bearing_error(state, goal)
    return max(-omega_max, min(omega_max, omega))
