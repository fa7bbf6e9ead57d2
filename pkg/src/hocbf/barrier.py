"""Quadratic barrier functions for the differential-drive plant.

Every barrier handled here has the form::

    h(x, y, t) = w_x (x - c_x(t))**2 + w_y (y - c_y(t))**2 - rho**2

with a constant-velocity center ``c(t) = c0 + v t``.  Static circles,
axis-aligned ellipses and moving circles are all special cases.  Because
``h`` does not depend on the heading, the input first shows up in the second
time derivative (relative degree two away from the radial-heading set).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import SystemParams


class DegreeViolation(ValueError):
    """Relative-degree certification failed on the supplied samples."""


class NonHurwitz(ValueError):
    """A requested closed-loop pole is not in the open left half-plane."""


class NotInInterior(ValueError):
    """The initial state is not strictly inside the safe set."""


KINDS = ("static-circle", "ellipse", "moving-circle")


@dataclass(frozen=True)
class BarrierSpec:
    kind: str
    center: tuple[float, float]
    radius: float
    weights: tuple[float, float] = (1.0, 1.0)
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown barrier kind {self.kind!r}; expected one of {KINDS}")
        if not self.radius > 0:
            raise ValueError(f"barrier radius must be positive, got {self.radius}")
        if not (self.weights[0] > 0 and self.weights[1] > 0):
            raise ValueError(f"axis weights must be positive, got {self.weights}")
        if self.kind != "ellipse" and tuple(self.weights) != (1.0, 1.0):
            raise ValueError("only ellipse barriers take axis weights")
        if self.kind != "moving-circle" and tuple(self.velocity) != (0.0, 0.0):
            raise ValueError("only moving-circle barriers take a velocity")

    @classmethod
    def circle(cls, center, radius):
        return cls("static-circle", tuple(map(float, center)), float(radius))

    @classmethod
    def ellipse(cls, center, radius, weights):
        return cls("ellipse", tuple(map(float, center)), float(radius), tuple(map(float, weights)))

    @classmethod
    def moving_circle(cls, center, radius, velocity):
        return cls(
            "moving-circle", tuple(map(float, center)), float(radius),
            velocity=tuple(map(float, velocity)),
        )

    @property
    def is_moving(self) -> bool:
        return self.kind == "moving-circle"

    def center_at(self, t: float) -> tuple[float, float]:
        return (self.center[0] + self.velocity[0] * t, self.center[1] + self.velocity[1] * t)


@dataclass(frozen=True)
class LieBundle:
    """Barrier value and its time derivatives along the plant.

    ``hdot`` is the total first derivative (it carries no ``omega`` term).
    The second derivative is ``hddot_drift + input_coeff * omega``.
    """

    h: float
    hdot: float
    hddot_drift: float
    input_coeff: float

    def hddot(self, omega: float) -> float:
        return self.hddot_drift + self.input_coeff * omega


def h_value(spec: BarrierSpec, state, t: float = 0.0) -> float:
    cx, cy = spec.center_at(t)
    wx, wy = spec.weights
    dx, dy = state[0] - cx, state[1] - cy
    return wx * dx * dx + wy * dy * dy - spec.radius**2


def lie_bundle(spec: BarrierSpec, state, t: float, p: SystemParams) -> LieBundle:
    cx, cy = spec.center_at(t)
    wx, wy = spec.weights
    vx, vy = spec.velocity
    dx, dy = state[0] - cx, state[1] - cy
    c, s = math.cos(state[2]), math.sin(state[2])
    v = p.speed
    # relative velocity of robot w.r.t. the obstacle center
    rx, ry = v * c - vx, v * s - vy
    h = wx * dx * dx + wy * dy * dy - spec.radius**2
    hdot = 2.0 * (wx * dx * rx + wy * dy * ry)
    hddot_drift = 2.0 * (wx * rx * rx + wy * ry * ry)
    input_coeff = 2.0 * v * p.turn_gain * (wy * dy * c - wx * dx * s)
    return LieBundle(h, hdot, hddot_drift, input_coeff)


def lg_h(spec: BarrierSpec, state, t: float, p: SystemParams) -> float:
    """``grad h . g``; the heading component of ``grad h`` is identically zero."""
    cx, cy = spec.center_at(t)
    wx, wy = spec.weights
    grad = np.array([2.0 * wx * (state[0] - cx), 2.0 * wy * (state[1] - cy), 0.0])
    return float(grad @ np.array([0.0, 0.0, p.turn_gain]))


def radial_angle(spec: BarrierSpec, state, t: float = 0.0) -> float:
    """Angle between the heading and the nearest of +/- grad h (positions only).

    ``L_g L_f h`` vanishes exactly when this angle is zero.
    """
    cx, cy = spec.center_at(t)
    wx, wy = spec.weights
    gx, gy = wx * (state[0] - cx), wy * (state[1] - cy)
    if gx == 0.0 and gy == 0.0:
        return 0.0
    c, s = math.cos(state[2]), math.sin(state[2])
    ang = math.atan2(abs(gx * s - gy * c), gx * c + gy * s)
    return min(ang, math.pi - ang)


def relative_degree_check(
    spec: BarrierSpec,
    states: Sequence,
    p: SystemParams,
    t: float = 0.0,
    exclusion: float = 1e-3,
) -> dict:
    """Certify relative degree two on a sample set.

    Samples whose heading lies within ``exclusion`` radians of the radial
    direction are dropped, since ``L_g L_f h`` legitimately vanishes there.
    Returns ``{"max_lg_h", "min_lglf_h", "n_used"}``; raises
    :class:`DegreeViolation` when ``max |L_g h| > 1e-9`` or
    ``min |L_g L_f h| == 0``.
    """
    states = list(states)
    if not states:
        raise ValueError("need at least one sample state")
    lg, lglf = [], []
    for s in states:
        if exclusion > 0 and radial_angle(spec, s, t) < exclusion:
            continue
        lg.append(abs(lg_h(spec, s, t, p)))
        lglf.append(abs(lie_bundle(spec, s, t, p).input_coeff))
    if not lg:
        raise DegreeViolation("every sample fell inside the radial exclusion band")
    report = {"max_lg_h": max(lg), "min_lglf_h": min(lglf), "n_used": len(lg)}
    if report["max_lg_h"] > 1e-9:
        raise DegreeViolation(f"L_g h reaches {report['max_lg_h']:.3e}; input enters at first order")
    if not report["min_lglf_h"] > 0.0:
        raise DegreeViolation("L_g L_f h vanishes on the sample set")
    return report


# --------------------------------------------------------------------------
# Exponential CBF gains
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EcbfGain:
    """Row gain ``K = (k_0, ..., k_{r-1})`` acting on ``(h, h', ..., h^(r-1))``."""

    K: tuple[float, ...]

    @property
    def order(self) -> int:
        return len(self.K)

    def companion(self) -> np.ndarray:
        """Closed-loop matrix ``F - G K`` of the chain-of-integrators system."""
        r = self.order
        F = np.eye(r, k=1)
        G = np.zeros((r, 1))
        G[-1, 0] = 1.0
        return F - G @ np.atleast_2d(np.asarray(self.K, dtype=float))

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.companion())

    def is_hurwitz(self) -> bool:
        return bool(np.all(self.poles().real < 0))


def pole_placement(poles: Sequence[float]) -> EcbfGain:
    """Gain placing the closed-loop eigenvalues at ``poles`` (real, negative)."""
    poles = np.asarray(poles, dtype=float)
    if poles.ndim != 1 or poles.size == 0:
        raise ValueError("poles must be a nonempty 1-D sequence")
    if np.any(poles >= 0):
        raise NonHurwitz(f"all poles must be negative, got {poles.tolist()}")
    coeffs = np.poly(poles)  # leading 1, then descending powers
    return EcbfGain(tuple(float(c) for c in coeffs[1:][::-1]))


def eta(spec: BarrierSpec, state, t: float, p: SystemParams) -> np.ndarray:
    """Transformed output state ``(h, h')`` from the (nominal) model ``p``."""
    b = lie_bundle(spec, state, t, p)
    return np.array([b.h, b.hdot])


# --------------------------------------------------------------------------
# Higher-order CBF chains
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassK:
    """Odd power law ``alpha(z) = sign(z) |z|**q`` with ``q >= 1``."""

    q: float = 1.0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("power must be >= 1 to keep alpha differentiable")

    def __call__(self, z: float) -> float:
        if self.q == 1.0:
            return z
        return math.copysign(abs(z) ** self.q, z)

    def derivative(self, z: float) -> float:
        if self.q == 1.0:
            return 1.0
        return self.q * abs(z) ** (self.q - 1.0)


@dataclass(frozen=True)
class HocbfChain:
    coeffs: tuple[float, ...]
    alphas: tuple[ClassK, ...] = field(default=(ClassK(), ClassK()))

    def __post_init__(self):
        if len(self.coeffs) != len(self.alphas):
            raise ValueError("one class-K function per coefficient")
        if any(not c > 0 for c in self.coeffs):
            raise ValueError(f"chain coefficients must be positive, got {self.coeffs}")

    @property
    def order(self) -> int:
        return len(self.coeffs)

    def with_coeffs(self, coeffs) -> "HocbfChain":
        return HocbfChain(tuple(float(c) for c in coeffs), self.alphas)


@dataclass(frozen=True)
class ChainTerms:
    """Chain values and the final condition ``drift + coeff * omega >= rhs``."""

    b: tuple[float, ...]
    drift: float
    input_coeff: float
    rhs: float


def b_chain(chain: HocbfChain, spec: BarrierSpec, state, t: float, p: SystemParams) -> ChainTerms:
    """Evaluate ``b_0 = h``, ``b_1 = h' + c_1 a_1(h)`` and the second-order condition.

    The condition ``b_1' >= -c_2 a_2(b_1)`` expands to::

        hddot_drift + c_1 a_1'(h) h' + input_coeff * omega >= -c_2 a_2(b_1)
    """
    if chain.order != 2:
        raise ValueError("only second-order chains are supported by this plant")
    lb = lie_bundle(spec, state, t, p)
    (c1, c2), (a1, a2) = chain.coeffs, chain.alphas
    b0 = lb.h
    b1 = lb.hdot + c1 * a1(b0)
    drift = lb.hddot_drift + c1 * a1.derivative(b0) * lb.hdot
    return ChainTerms((b0, b1), drift, lb.input_coeff, -c2 * a2(b1))


def select_cj(
    chain: HocbfChain,
    spec: BarrierSpec,
    x0,
    p: SystemParams,
    delta: Sequence[float],
    t: float = 0.0,
    omega0: float = 0.0,
) -> tuple[float, ...]:
    """Pick chain coefficients making every ``b_j(x0)`` strictly positive.

    Each ``c_j`` is ``max(ratio_j + delta_j, delta_j)`` with
    ``ratio_j = -(lower-order terms) / alpha_j(b_{j-1}(x0))``, taken in order
    ``j = 1, 2``; the last stage uses the control ``omega0`` applied at ``x0``.
    """
    if chain.order != 2 or len(delta) != 2:
        raise ValueError("expected a second-order chain and two margins")
    if any(not d > 0 for d in delta):
        raise ValueError("margins must be positive")
    lb = lie_bundle(spec, x0, t, p)
    if not lb.h > 0:
        raise NotInInterior(f"h(x0) = {lb.h:.6g} is not positive")
    a1, a2 = chain.alphas

    ratio1 = -lb.hdot / a1(lb.h)
    c1 = max(ratio1 + delta[0], delta[0])
    b1 = lb.hdot + c1 * a1(lb.h)

    b1dot = lb.hddot(omega0) + c1 * a1.derivative(lb.h) * lb.hdot
    ratio2 = -b1dot / a2(b1)
    c2 = max(ratio2 + delta[1], delta[1])
    return (float(c1), float(c2))


# --------------------------------------------------------------------------
# Lipschitz vs non-Lipschitz class-K counterexample
# --------------------------------------------------------------------------

_K32 = 2.0 * math.sqrt(2.0) / (3.0 * math.sqrt(3.0))


def counterexample_h(x: float) -> float:
    """``h(x) = k x**1.5`` extended oddly to negative ``x``."""
    return math.copysign(_K32 * abs(x) ** 1.5, x)


def demo_nonlipschitz_alpha(x0: float, dt: float, t_max: float | None = None) -> float:
    """First time ``h <= 0`` for ``x' = -1`` with ``h = k x**1.5``.

    Along this flow ``h' = -h**(1/3)`` holds for every ``x >= 0``, i.e. the
    barrier condition is met with equality using the non-Lipschitz class-K
    function ``z**(1/3)``, yet ``h`` reaches zero in finite time.
    Returns ``inf`` if that does not happen before ``t_max``.
    """
    if not x0 > 0 or not dt > 0:
        raise ValueError("x0 and dt must be positive")
    t_max = 10.0 * x0 if t_max is None else t_max
    n = int(math.ceil(t_max / dt))
    for k in range(1, n + 1):
        t = k * dt
        x = x0 - t  # exact flow of x' = -1
        if counterexample_h(x) <= 0.0:
            return t
    return math.inf


def demo_lipschitz_alpha(h0: float, dt: float, horizon: float) -> float:
    """Minimum of ``h`` over ``[0, horizon]`` for ``h' = -h`` integrated by RK4."""
    if not h0 > 0 or not dt > 0:
        raise ValueError("h0 and dt must be positive")
    def rhs(z):
        return -z

    h, lowest = h0, h0
    for _ in range(int(math.ceil(horizon / dt))):
        k1 = rhs(h)
        k2 = rhs(h + 0.5 * dt * k1)
        k3 = rhs(h + 0.5 * dt * k2)
        k4 = rhs(h + dt * k3)
        h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        lowest = min(lowest, h)
    return lowest
