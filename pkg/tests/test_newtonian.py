"""Multi-soliton initial data, center tracking, the reduced dynamics, and
the harmonic-trap transport orbit (2d configurations for speed)."""

import numpy as np
import pytest

from hartreelab.grid import Field, Lattice
from hartreelab.ground_state import minimize
from hartreelab.newtonian import (CenterTracker, NewtonConfig, SeparationError,
                                  SolitonBody, bound_pair_energy, build_initial,
                                  compare, harmonic_orbit_test, newton_ode,
                                  reduced_energy, soliton_diameter)
from hartreelab.observables import charge, momentum
from hartreelab.potentials import ExternalPotential, TwoBodyPotential
from hartreelab.propagator import PropagatorConfig, evolve

FREE = ExternalPotential(kind="zero", lam=0.0)


def composite(eps, nu=1.0, amp_long=0.2, w_long=1.0):
    short = TwoBodyPotential(kind="gaussian", sign=-1, width=1.0)
    long = TwoBodyPotential(kind="gaussian", sign=-1, width=w_long,
                            amplitude=amp_long)
    return TwoBodyPotential(kind="composite", nu=nu, short=short, long=long,
                            eps=eps)


def short_kernel(nu=1.0):
    return TwoBodyPotential(kind="gaussian", sign=-1, nu=nu, width=1.0)


@pytest.fixture(scope="module")
def soliton_2d():
    """omega ~ 1 soliton of the attractive gaussian kernel in 2d."""
    lat = Lattice(2, 128, 24.0)
    gs = minimize(6.774, FREE, short_kernel(), lat, tol=1e-10, seed=0)
    return gs


class TestBuildInitial:
    def test_single_body_at_rest_is_q(self, soliton_2d):
        gs = soliton_2d
        cfg = NewtonConfig(eps=0.2, bodies=[SolitonBody(N=gs.N, q=[0.0, 0.0],
                                                        v=[0.0, 0.0])],
                           phi=composite(0.2))
        psi = build_initial(cfg, {gs.N: gs})
        assert np.max(np.abs(psi.values - gs.Q.values)) < 1e-12

    def test_two_bodies_charge_additive(self, soliton_2d):
        gs = soliton_2d
        sep = 24.0
        cfg = NewtonConfig(eps=0.1, phi=composite(0.1), bodies=[
            SolitonBody(N=gs.N, q=[-sep / 2, 0.0], v=[0.0, 0.0]),
            SolitonBody(N=gs.N, q=[+sep / 2, 0.0], v=[0.0, 0.0])])
        psi = build_initial(cfg, {gs.N: gs})
        assert charge(psi) == pytest.approx(2 * gs.N, rel=1e-8)

    def test_boosted_body_momentum(self, soliton_2d):
        gs = soliton_2d
        v = np.array([0.5, -0.25])
        cfg = NewtonConfig(eps=0.2, phi=composite(0.2),
                           bodies=[SolitonBody(N=gs.N, q=[0.0, 0.0], v=v)])
        psi = build_initial(cfg, {gs.N: gs})
        assert np.allclose(momentum(psi), 0.5 * v * gs.N, atol=1e-9)

    def test_separation_guard(self, soliton_2d):
        gs = soliton_2d
        L_sol = soliton_diameter({gs.N: gs})
        eps = 0.05
        too_close = 0.5 * L_sol / eps
        cfg = NewtonConfig(eps=eps, phi=composite(eps), bodies=[
            SolitonBody(N=gs.N, q=[-too_close / 2, 0.0], v=[0.0, 0.0]),
            SolitonBody(N=gs.N, q=[+too_close / 2, 0.0], v=[0.0, 0.0])])
        with pytest.raises(SeparationError):
            build_initial(cfg, {gs.N: gs})

    def test_missing_ground_state(self, soliton_2d):
        gs = soliton_2d
        cfg = NewtonConfig(eps=0.2, phi=composite(0.2),
                           bodies=[SolitonBody(N=1.23, q=[0.0, 0.0],
                                               v=[0.0, 0.0])])
        with pytest.raises(KeyError):
            build_initial(cfg, {gs.N: gs})


class TestTracking:
    def test_stationary_soliton_constant(self, soliton_2d):
        gs = soliton_2d
        lat = gs.Q.lattice
        cfg = NewtonConfig(eps=0.2, phi=composite(0.2),
                           bodies=[SolitonBody(N=gs.N, q=[0.0, 0.0],
                                               v=[0.0, 0.0])])
        tracker = CenterTracker(cfg, lat, soliton_diameter({gs.N: gs}))
        pcfg = PropagatorConfig(dt=2e-3, t_end=0.5, record_every=50)
        evolve(gs.Q, FREE, short_kernel(), pcfg, observer=tracker.update)
        ts, qs, ms = tracker.trajectory()
        assert np.max(np.abs(qs - qs[0])) < 1e-6
        assert np.max(np.abs(ms - ms[0])) < 1e-8 * ms[0, 0]

    def test_boosted_soliton_inertial(self, soliton_2d):
        gs = soliton_2d
        lat = gs.Q.lattice
        v = np.array([0.8, 0.0])
        from hartreelab.propagator import boost
        psi0 = boost(gs.Q, v)
        cfg = NewtonConfig(eps=0.2, phi=composite(0.2),
                           bodies=[SolitonBody(N=gs.N, q=[0.0, 0.0], v=v)])
        tracker = CenterTracker(cfg, lat, soliton_diameter({gs.N: gs}))
        pcfg = PropagatorConfig(dt=2e-3, t_end=2.0, record_every=100)
        log = evolve(psi0, FREE, short_kernel(), pcfg, observer=tracker.update)
        ts, qs, ms = tracker.trajectory()
        # centroid slope equals the boost velocity (= 2 P / N)
        slope = np.polyfit(ts, qs[:, 0, 0], 1)[0]
        assert slope == pytest.approx(v[0], abs=5e-4)
        P = np.atleast_1d(log.records[0].momentum)
        assert slope == pytest.approx(2 * P[0] / gs.N, abs=5e-4)
        # windowed tail flutter as the profile slides across the lattice
        assert np.max(np.abs(ms / ms[0] - 1.0)) < 5e-4

    def test_window_collision_flag(self, soliton_2d):
        gs = soliton_2d
        lat = gs.Q.lattice
        L_sol = soliton_diameter({gs.N: gs})
        cfg = NewtonConfig(eps=0.5, phi=composite(0.5),
                           window_radius_factor=4.0, bodies=[
                               SolitonBody(N=gs.N, q=[-2.0, 0.0], v=[0.0, 0.0]),
                               SolitonBody(N=gs.N, q=[+2.0, 0.0], v=[0.0, 0.0])])
        tracker = CenterTracker(cfg, lat, L_sol)
        tracker.update(0.0, gs.Q)
        assert tracker.ambiguous


class TestNewtonOde:
    def test_free_straight_lines(self):
        cfg = NewtonConfig(eps=0.1, phi=composite(0.1, nu=0.0), bodies=[
            SolitonBody(N=1.0, q=[0.0, 0.0], v=[0.3, -0.1]),
            SolitonBody(N=2.0, q=[5.0, 1.0], v=[-0.2, 0.0])])
        ts = np.linspace(0.0, 10.0, 21)
        out = newton_ode(cfg, ts)
        for i, t in enumerate(ts):
            assert np.allclose(out["q"][i, 0], [0.3 * t, -0.1 * t], atol=1e-12)
            assert np.allclose(out["q"][i, 1], [5.0 - 0.2 * t, 1.0], atol=1e-12)

    def test_harmonic_profile_oscillator(self):
        # W(eps x) with harmonic profile: m qdd = -2 lam eps^2 q
        eps, lam = 0.1, 0.5
        W = ExternalPotential(kind="harmonic", lam=lam)
        cfg = NewtonConfig(eps=eps, phi=composite(eps, nu=0.0), external=W,
                           bodies=[SolitonBody(N=1.0, q=[2.0, 0.0],
                                               v=[0.0, 0.0])])
        ts = np.linspace(0.0, 30.0, 61)
        out = newton_ode(cfg, ts, dt=1e-3)
        Om = 2.0 * eps * np.sqrt(lam)
        expect = 2.0 * np.cos(Om * ts)
        assert np.max(np.abs(out["q"][:, 0, 0] - expect)) < 1e-8
        assert out["energy_drift"] < 1e-10

    def test_two_body_momentum_conserved(self):
        eps = 0.1
        cfg = NewtonConfig(eps=eps, phi=composite(eps, nu=1.0, amp_long=1.0),
                           bodies=[
                               SolitonBody(N=1.5, q=[-6.0, 0.0], v=[0.05, 0.02]),
                               SolitonBody(N=2.5, q=[+6.0, 0.0], v=[-0.03, 0.0])])
        ts = np.linspace(0.0, 10.0, 11)
        out = newton_ode(cfg, ts, dt=1e-3)
        p = 0.5 * (1.5 * out["v"][:, 0, :] + 2.5 * out["v"][:, 1, :])
        assert np.max(np.abs(p - p[0])) < 1e-12
        assert out["energy_drift"] < 1e-10

    def test_compare_requires_matching_shapes(self):
        with pytest.raises(ValueError):
            compare([0.0, 1.0], np.zeros((2, 1, 2)), np.zeros((3, 1, 2)))

    def test_bound_pair_indicator(self):
        eps = 0.1
        cfg = NewtonConfig(eps=eps, phi=composite(eps, nu=1.0, amp_long=1.0),
                           bodies=[
                               SolitonBody(N=2.0, q=[-4.0, 0.0], v=[0.0, 0.0]),
                               SolitonBody(N=2.0, q=[+4.0, 0.0], v=[0.0, 0.0])])
        assert bound_pair_energy(cfg) < 0     # at rest in an attractive well
        fast = NewtonConfig(eps=eps, phi=composite(eps, nu=1.0, amp_long=1.0),
                            bodies=[
                                SolitonBody(N=2.0, q=[-4.0, 0.0], v=[2.0, 0.0]),
                                SolitonBody(N=2.0, q=[+4.0, 0.0], v=[-2.0, 0.0])])
        assert bound_pair_energy(fast) > 0


@pytest.fixture(scope="module")
def trap_state():
    lat = Lattice(2, 64, 8.0)
    V = ExternalPotential(kind="harmonic", lam=1.0)
    phi = TwoBodyPotential(kind="gaussian", sign=-1, nu=0.5, width=1.0)
    gs = minimize(1.0, V, phi, lat, tol=1e-9)
    return gs, V, phi


class TestHarmonicOrbit:

    def test_stationary_center(self, trap_state):
        gs, V, phi = trap_state
        rep = harmonic_orbit_test(gs, V, phi, x0=[0.0, 0.0], p0=[0.0, 0.0],
                                  n_periods=0.25, dt=2e-3, record_every=25)
        assert rep["sup_deviation"] < 1e-8

    def test_circular_transport(self, trap_state):
        gs, V, phi = trap_state
        rep = harmonic_orbit_test(gs, V, phi, x0=[1.0, 0.0], p0=[0.0, 0.0],
                                  n_periods=1.0, dt=1e-3, record_every=50)
        assert rep["sup_deviation"] < 1e-3
        assert rep["orbit_energy_drift"] < 1e-4
        # period pi: the center returns
        assert np.allclose(rep["x"][-1], [1.0, 0.0], atol=1e-3)

    def test_requires_unit_harmonic_trap(self, trap_state):
        gs, V, phi = trap_state
        with pytest.raises(ValueError):
            harmonic_orbit_test(gs, ExternalPotential(kind="harmonic", lam=2.0),
                                phi, x0=[1.0, 0.0], p0=[0.0, 0.0])
