import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hocbf import barrier as bar
from hocbf.barrier import BarrierSpec, ClassK, EcbfGain, HocbfChain
from hocbf.dynamics import SystemParams, step
from hocbf.safety_filter import assemble_ecbf, assemble_hocbf

from conftest import random_params, random_state

CIRCLE = BarrierSpec.circle((0.0, 0.0), 1.5)
ELLIPSE = BarrierSpec.ellipse((-1.0, -1.0), 1.0, (1.0, 4.0))
MOVING = BarrierSpec.moving_circle((-2.0, 0.0), 0.5, (0.6, 0.0))


class TestSpec:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(kind="static-circle", center=(0, 0), radius=0.0),
            dict(kind="ellipse", center=(0, 0), radius=1.0, weights=(1.0, -4.0)),
            dict(kind="triangle", center=(0, 0), radius=1.0),
            dict(kind="static-circle", center=(0, 0), radius=1.0, velocity=(0.1, 0.0)),
        ],
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            BarrierSpec(**kw)

    def test_center_moves(self):
        assert MOVING.center_at(2.0) == pytest.approx((-0.8, 0.0))
        assert CIRCLE.center_at(5.0) == (0.0, 0.0)
        assert MOVING.is_moving and not CIRCLE.is_moving


class TestValue:
    def test_circle(self):
        # 2**2 - 1.5**2
        assert bar.h_value(CIRCLE, (2.0, 0.0, 0.3)) == pytest.approx(1.75)

    def test_ellipse_center(self):
        assert bar.h_value(ELLIPSE, (-1.0, -1.0, 0.0)) == pytest.approx(-1.0)

    def test_moving_circle_at_start(self):
        assert bar.h_value(MOVING, (-2.5, -2.5, 1.0), 0.0) == pytest.approx(6.25)

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_sign_matches_geometry(self, x, y):
        inside = x * x + y * y < 2.25
        h = bar.h_value(CIRCLE, (x, y, 0.0))
        assert (h < 0) == inside or abs(h) < 1e-12


class TestLieBundle:
    def test_hdot_radial(self, nominal):
        lb = bar.lie_bundle(CIRCLE, (2.0, 0.0, 0.0), 0.0, nominal)
        assert lb.hdot == pytest.approx(0.4)
        assert lb.input_coeff == pytest.approx(0.0, abs=1e-15)
        assert lb.hddot_drift == pytest.approx(0.02)

    def test_input_coeff_tangential(self, nominal):
        lb = bar.lie_bundle(CIRCLE, (0.0, 2.0, 0.0), 0.0, nominal)
        assert lb.input_coeff == pytest.approx(0.4)

    def test_closed_form_circle(self, rng):
        for _ in range(50):
            p, s = random_params(rng), random_state(rng)
            x, y, th = s
            lb = bar.lie_bundle(CIRCLE, s, 0.0, p)
            assert lb.hdot == pytest.approx(2 * p.r * p.u * (x * math.cos(th) + y * math.sin(th)))
            assert lb.hddot_drift == pytest.approx(2 * (p.r * p.u) ** 2)
            assert lb.input_coeff == pytest.approx(2 * p.r**2 * p.u / p.L * (y * math.cos(th) - x * math.sin(th)))

    @pytest.mark.parametrize("spec", [CIRCLE, ELLIPSE, MOVING], ids=["circle", "ellipse", "moving"])
    def test_matches_finite_differences(self, spec, rng):
        eps = 1e-4
        for _ in range(40):
            p, s, t = random_params(rng), random_state(rng), rng.uniform(0, 5)
            w = rng.uniform(-2, 2)
            lb = bar.lie_bundle(spec, s, t, p)
            fwd, back = step(s, w, p, eps), flow_back(s, w, p, eps)
            hdot_fd = (bar.h_value(spec, fwd, t + eps) - bar.h_value(spec, back, t - eps)) / (2 * eps)
            assert hdot_fd == pytest.approx(lb.hdot, rel=1e-5, abs=1e-9)
            up = bar.lie_bundle(spec, fwd, t + eps, p).hdot
            dn = bar.lie_bundle(spec, back, t - eps, p).hdot
            assert (up - dn) / (2 * eps) == pytest.approx(lb.hddot(w), rel=1e-5, abs=1e-9)

    def test_moving_obstacle_adds_time_partial(self, nominal):
        s, t, eps = np.array([0.5, 1.0, 0.4]), 1.3, 1e-6
        frozen = BarrierSpec.circle(MOVING.center_at(t), MOVING.radius)
        dh_dt = (bar.h_value(MOVING, s, t + eps) - bar.h_value(MOVING, s, t - eps)) / (2 * eps)
        gap = bar.lie_bundle(MOVING, s, t, nominal).hdot - bar.lie_bundle(frozen, s, 0.0, nominal).hdot
        assert gap == pytest.approx(dh_dt, rel=1e-7)
        assert dh_dt != 0

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-math.pi, math.pi))
    def test_first_derivative_free_of_input(self, x, y, th):
        p = SystemParams(0.1, 0.1, 1.0)
        assert bar.lg_h(CIRCLE, (x, y, th), 0.0, p) == 0.0
        assert bar.lg_h(ELLIPSE, (x, y, th), 0.0, p) == 0.0


def flow_back(s, w, p, eps):
    """Integrate backwards in time: negate the speed and the turn command."""
    return step(s, -w, SystemParams(p.r, p.L, -p.u), eps)


class TestRelativeDegree:
    def test_certifies_circle(self, nominal, rng):
        states = [random_state(rng) for _ in range(1000)]
        rep = bar.relative_degree_check(CIRCLE, states, nominal)
        assert rep["max_lg_h"] <= 1e-9
        assert rep["min_lglf_h"] > 0
        assert rep["n_used"] <= 1000

    def test_radial_sample_without_exclusion(self, nominal):
        with pytest.raises(bar.DegreeViolation):
            bar.relative_degree_check(CIRCLE, [(2.0, 0.0, 0.0)], nominal, exclusion=0.0)

    def test_radial_sample_excluded(self, nominal):
        rep = bar.relative_degree_check(CIRCLE, [(2.0, 0.0, 0.0), (0.0, 2.0, 0.0)], nominal)
        assert rep["n_used"] == 1

    def test_ellipse(self, nominal, rng):
        states = [random_state(rng) for _ in range(300)]
        assert bar.relative_degree_check(ELLIPSE, states, nominal)["max_lg_h"] == 0.0


class TestPolePlacement:
    @pytest.mark.parametrize(
        "poles, K",
        [((-1, -1), (1, 2)), ((-2, -5), (10, 7)), ((-3 + 2 * math.sqrt(2), -3 - 2 * math.sqrt(2)), (1, 6))],
    )
    def test_known_gains(self, poles, K):
        assert bar.pole_placement(poles).K == pytest.approx(K)

    def test_round_trip(self):
        got = np.sort(EcbfGain((1.0, 6.0)).poles().real)
        np.testing.assert_allclose(got, [-3 - 2 * math.sqrt(2), -3 + 2 * math.sqrt(2)], atol=1e-12)

    @pytest.mark.parametrize("poles", [(-1, 0), (0.5, -2)])
    def test_non_hurwitz(self, poles):
        with pytest.raises(bar.NonHurwitz):
            bar.pole_placement(poles)

    def test_hurwitz_flag(self):
        assert EcbfGain((1, 6)).is_hurwitz()
        assert not EcbfGain((1, -1)).is_hurwitz()


def test_eta(nominal):
    np.testing.assert_allclose(bar.eta(CIRCLE, (2.0, 0.0, 0.0), 0.0, nominal), [1.75, 0.4])


def test_eta_on_boundary_outward(nominal):
    s = (1.5 * math.cos(0.7), 1.5 * math.sin(0.7), 0.7)
    np.testing.assert_allclose(bar.eta(CIRCLE, s, 0.0, nominal), [0.0, 2 * 0.1 * 1.5], atol=1e-12)


class TestClassK:
    def test_odd_power(self):
        a = ClassK(3.0)
        assert a(2.0) == 8.0 and a(-2.0) == -8.0
        assert a.derivative(-2.0) == 12.0

    def test_rejects_sublinear(self):
        with pytest.raises(ValueError):
            ClassK(0.5)

    @given(st.floats(-10, 10), st.floats(-10, 10), st.sampled_from([1.0, 2.0, 3.0]))
    def test_monotone(self, a, b, q):
        k = ClassK(q)
        if a < b:
            assert k(a) <= k(b)


class TestChain:
    def test_linear_unit_chain_is_ecbf(self, nominal, rng):
        chain = HocbfChain((1.0, 1.0))
        for _ in range(50):
            s = random_state(rng)
            hc = assemble_hocbf(bar.b_chain(chain, CIRCLE, s, 0.0, nominal))
            ec = assemble_ecbf(bar.lie_bundle(CIRCLE, s, 0.0, nominal), EcbfGain((1.0, 2.0)), bar.eta(CIRCLE, s, 0.0, nominal))
            assert hc.a == pytest.approx(ec.a)
            assert hc.b == pytest.approx(ec.b, abs=1e-12)

    def test_b0(self, nominal):
        assert bar.b_chain(HocbfChain((1.0, 1.0)), CIRCLE, (2.0, 0.0, 0.0), 0.0, nominal).b[0] == pytest.approx(1.75)

    def test_cubic_at_boundary(self, nominal):
        s = (0.0, 1.5, 0.3)
        terms = bar.b_chain(HocbfChain((1.0, 1.0), (ClassK(3), ClassK(3))), CIRCLE, s, 0.0, nominal)
        assert terms.b[1] == pytest.approx(bar.lie_bundle(CIRCLE, s, 0.0, nominal).hdot)

    def test_rejects_nonpositive_coeff(self):
        with pytest.raises(ValueError):
            HocbfChain((1.0, 0.0))

    def test_negative_b1_still_well_formed(self, nominal):
        # heading straight at the obstacle from just outside it
        terms = bar.b_chain(HocbfChain((0.1, 1.0), (ClassK(3), ClassK(3))), CIRCLE, (1.6, 0.0, math.pi), 0.0, nominal)
        assert terms.b[1] < 0
        assert terms.rhs > 0 and math.isfinite(terms.rhs)

    def test_larger_c2_loosens(self, nominal):
        s = (0.0, 2.2, 0.1)
        lo = assemble_hocbf(bar.b_chain(HocbfChain((1.0, 1.0)), CIRCLE, s, 0.0, nominal))
        hi = assemble_hocbf(bar.b_chain(HocbfChain((1.0, 10.0)), CIRCLE, s, 0.0, nominal))
        assert hi.b < lo.b


class TestSelectCj:
    chain = HocbfChain((1.0, 1.0))

    def test_outward_motion_uses_margin(self, nominal):
        c = bar.select_cj(self.chain, CIRCLE, (2.0, 0.0, 0.0), nominal, (0.01, 0.01))
        assert c[0] == pytest.approx(0.01)

    def test_inward_motion_needs_ratio(self):
        # h = 0.5 and h' = -1 for a radius-sqrt(24.5) disc seen from (5, 0) heading inward
        spec = BarrierSpec.circle((0.0, 0.0), math.sqrt(24.5))
        c = bar.select_cj(self.chain, spec, (5.0, 0.0, math.pi), SystemParams(0.1, 0.1, 1.0), (0.01, 0.01))
        assert c[0] == pytest.approx(2.01)

    def test_not_in_interior(self, nominal):
        with pytest.raises(bar.NotInInterior):
            bar.select_cj(self.chain, CIRCLE, (1.0, 0.0, 0.0), nominal, (0.01, 0.01))

    def test_chain_values_positive(self, nominal, rng):
        for _ in range(100):
            s = random_state(rng)
            if bar.h_value(CIRCLE, s) <= 0:
                continue
            c = bar.select_cj(self.chain, CIRCLE, s, nominal, (0.05, 0.05))
            terms = bar.b_chain(self.chain.with_coeffs(c), CIRCLE, s, 0.0, nominal)
            assert min(terms.b) > 0
            assert terms.drift + terms.input_coeff * 0.0 - terms.rhs > 0
            assert min(c) >= 0.05


class TestCounterexamples:
    @pytest.mark.parametrize("x0", [0.25, 1.0, 4.0])
    def test_nonlipschitz_hits_zero(self, x0):
        assert bar.demo_nonlipschitz_alpha(x0, 1e-4) == pytest.approx(x0, abs=1e-2)

    def test_flow_satisfies_condition_with_equality(self):
        # h' = -h**(1/3) along x' = -1
        x, eps = 0.7, 1e-6
        hdot = -(bar.counterexample_h(x + eps) - bar.counterexample_h(x - eps)) / (2 * eps)
        assert hdot == pytest.approx(-bar.counterexample_h(x) ** (1 / 3), rel=1e-6)

    @pytest.mark.parametrize("x0", [0.25, 1.0, 4.0])
    def test_lipschitz_stays_positive(self, x0):
        h0 = bar.counterexample_h(x0)
        assert bar.demo_lipschitz_alpha(h0, 1e-2, 10 * x0) > 0

    def test_no_hit_within_short_window(self):
        assert bar.demo_nonlipschitz_alpha(1.0, 1e-3, t_max=0.5) == math.inf
