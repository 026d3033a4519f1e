import numpy as np
import pytest

import gelkit as gk
from gelkit.errors import ExplosionReached


def resolvent_oracle(q0: np.ndarray, a_plus: np.ndarray, t: float, rs=1.0):
    """Closed form for the pre-gel second-moment flow; TEST ORACLE ONLY."""
    n = q0.shape[0]
    return q0 @ np.linalg.inv(np.eye(n) - t * rs * (a_plus @ q0))


class TestSubcritical:
    def test_multiplicative_anchor(self, mult):
        sys_, meas = mult
        st = gk.integrate_subcritical(sys_, gk.initial_state(meas), 0.5)
        assert st.q[0, 0] == pytest.approx(2.0, rel=1e-9)
        assert st.z[0] == pytest.approx(2.0, rel=1e-9)
        assert st.z[1] == pytest.approx(2.0, rel=1e-9)
        assert st.total_second_moment == pytest.approx(8.0, rel=1e-9)

    def test_against_resolvent_oracle(self, kac):
        sys_, meas = kac
        q0 = gk.gram_plus(meas)
        for t in (0.05, 0.1, 0.14):
            st = gk.integrate_subcritical(sys_, gk.initial_state(meas), t)
            oracle = resolvent_oracle(q0, sys_.a_plus, t)
            assert np.allclose(st.q, oracle, rtol=1e-7)

    def test_oracle_with_rate_scale(self, bidi):
        sys_, meas = bidi
        q0 = gk.gram_plus(meas)
        st = gk.integrate_subcritical(
            sys_, gk.initial_state(meas), 0.15, rate_scale=2.0
        )
        oracle = resolvent_oracle(q0, sys_.a_plus, 0.15, rs=2.0)
        assert np.allclose(st.q, oracle, rtol=1e-8)

    def test_outputs_grid(self, mult):
        sys_, meas = mult
        states = gk.integrate_subcritical(
            sys_, gk.initial_state(meas), 0.8, outputs=[0.2, 0.5, 0.8]
        )
        assert [s.t for s in states] == [0.2, 0.5, 0.8]
        qs = [s.q[0, 0] for s in states]
        assert qs == sorted(qs)

    def test_rate_scale_is_time_change(self, kac):
        sys_, meas = kac
        a = gk.integrate_subcritical(
            sys_, gk.initial_state(meas), 0.06, rate_scale=2.0
        )
        b = gk.integrate_subcritical(sys_, gk.initial_state(meas), 0.12)
        assert np.allclose(a.q, b.q, rtol=1e-8)
        assert np.allclose(a.z, b.z, rtol=1e-8)

    def test_past_gelation_raises(self, mult):
        sys_, meas = mult
        with pytest.raises(ExplosionReached):
            gk.integrate_subcritical(sys_, gk.initial_state(meas), 1.5)


class TestExplosionTime:
    def test_matches_spectral_multiplicative(self, mult):
        sys_, meas = mult
        zeta = gk.explosion_time(sys_, gk.initial_state(meas))
        assert abs(zeta - 1.0) < 1e-6

    def test_matches_spectral_kinetic(self, kac):
        sys_, meas = kac
        zeta = gk.explosion_time(sys_, gk.initial_state(meas))
        t_g = gk.gelation_time(sys_, meas)
        assert abs(zeta - t_g) / t_g < 1e-6

    def test_rate_scale(self, mult):
        sys_, meas = mult
        zeta = gk.explosion_time(sys_, gk.initial_state(meas), rate_scale=2.0)
        assert abs(zeta - 0.5) < 1e-6


class TestSupercritical:
    def test_dual_anchor(self, mult):
        sys_, meas = mult
        st = gk.supercritical_moments(sys_, meas, 2.0)
        # oracle: the tilted system is again scalar, so the resolvent applies
        tilted_mass = 1.0 - gk.gel_data(sys_, meas, 2.0).mass
        oracle = tilted_mass / (1.0 - 2.0 * tilted_mass)
        assert st.q[0, 0] == pytest.approx(oracle, rel=1e-8)
        assert st.q[0, 0] == pytest.approx(0.342283635738, rel=1e-9)

    def test_subcritical_time_rejected(self, mult):
        sys_, meas = mult
        with pytest.raises(ValueError):
            gk.supercritical_moments(sys_, meas, 0.5)

    def test_moments_at_phase_labels(self, mult):
        sys_, meas = mult
        _, phase = gk.moments_at(sys_, meas, 0.5)
        assert phase == "sol-subcritical"
        _, phase = gk.moments_at(sys_, meas, 1.5)
        assert phase == "supercritical-dual"

    def test_dual_moments_decrease_in_time(self, mult):
        sys_, meas = mult
        qs = [
            gk.supercritical_moments(sys_, meas, t).q[0, 0]
            for t in (1.5, 2.0, 3.0)
        ]
        assert qs == sorted(qs, reverse=True)


@pytest.fixture(scope="module")
def mult_growth(mult):
    sys_, meas = mult
    return gk.gel_growth_ode(sys_, meas, 2.01, outputs=[1.5, 2.0, 2.01])


class TestGelGrowth:
    def test_matches_fixed_point_curve(self, mult, mult_growth):
        sys_, meas = mult
        for t, g in mult_growth[:2]:
            ref = gk.gel_data(sys_, meas, t)
            assert np.abs(g.g[:2] - ref.g[:2]).max() < 1e-5

    def test_multiplicative_growth_slope_identity(self, mult_growth):
        # dM/dt = M(1-M)/(1 - t(1-M)) for this kernel; check via small step
        m = mult_growth[1][1].mass
        m2 = mult_growth[2][1].mass
        slope = (m2 - m) / 0.01
        expect = m * (1.0 - m) / (1.0 - 2.0 * (1.0 - m))
        assert slope == pytest.approx(expect, rel=2e-2)

    def test_kinetic_gel_growth_positive(self, kac):
        sys_, meas = kac
        t_g = gk.gelation_time(sys_, meas)
        pts = gk.gel_growth_ode(sys_, meas, 2.0 * t_g, outputs=[2.0 * t_g])
        g = pts[-1][1]
        assert g.mass > 0.0
        assert np.all(g.conserved(2) > 0.0)
