"""Split-step propagation: exactness cases, splitting order, conservation,
boosts, and the trajectory bookkeeping."""

import numpy as np
import pytest

from hartreelab.grid import Field, Lattice
from hartreelab.observables import (charge, com_inertia_residual, energy,
                                    momentum, variance_identity_residual)
from hartreelab.potentials import ExternalPotential, KineticKind, TwoBodyPotential
from hartreelab.propagator import PropagatorConfig, boost, evolve, step

FREE = ExternalPotential(kind="zero", lam=0.0)
NO_PAIR = TwoBodyPotential(kind="gaussian", nu=0.0)


def gaussian(lat, width=1.0, N=1.0):
    r2 = sum(x ** 2 for x in lat.coords())
    f = Field(lat, np.exp(-r2 / (2 * width ** 2)).astype(complex))
    f.values *= np.sqrt(N / charge(f))
    return f


def coulomb(nu):
    return TwoBodyPotential(kind="power_law", sigma=1.0, sign=-1, nu=nu)


class TestStep:
    def test_free_plane_wave_exact(self):
        lat = Lattice(1, 32, 4.0)
        k0 = lat.axis_freqs()[3]
        psi = Field(lat, np.exp(1j * k0 * lat.axis_coords()))
        out = step(psi, FREE, NO_PAIR, dt=0.37)
        expect = np.exp(-1j * k0 ** 2 * 0.37) * psi.values
        assert np.max(np.abs(out.values - expect)) < 1e-13

    def test_strang_order(self):
        # two half steps against one full step differ at O(dt^3)
        lat = Lattice(1, 64, 8.0)
        V = ExternalPotential(kind="harmonic", lam=1.0)
        phi = TwoBodyPotential(kind="gaussian", sign=-1, nu=0.5, width=1.0)
        psi = gaussian(lat, width=1.1)
        errs = []
        for dt in (0.1, 0.05, 0.025):
            one = step(psi, V, phi, dt)
            two = step(step(psi, V, phi, dt / 2), V, phi, dt / 2)
            errs.append(np.max(np.abs(one.values - two.values)))
        rate1 = errs[0] / errs[1]
        rate2 = errs[1] / errs[2]
        assert 6.0 < rate1 < 10.0   # ~ 2^3
        assert 6.0 < rate2 < 10.0

    def test_single_step_first_order_from_identity(self):
        lat = Lattice(1, 64, 8.0)
        psi = gaussian(lat)
        dt = 1e-3
        out = step(psi, FREE, coulomb(0.3) if lat.d == 3 else
                   TwoBodyPotential(kind="gaussian", sign=-1, nu=0.3), dt)
        assert np.max(np.abs(out.values - psi.values)) < 10 * dt

    def test_semirelativistic_free_wave(self):
        lat = Lattice(1, 32, 4.0)
        k0 = lat.axis_freqs()[5]
        m = 2.0
        psi = Field(lat, np.exp(1j * k0 * lat.axis_coords()))
        out = step(psi, FREE, NO_PAIR, dt=0.2,
                   kinetic=KineticKind(kind="semirelativistic", mass=m))
        phase = np.sqrt(k0 ** 2 + m ** 2) - m
        assert np.max(np.abs(out.values - np.exp(-1j * phase * 0.2) * psi.values)) < 1e-13


class TestEvolve:
    def test_free_gaussian_conservation(self):
        lat = Lattice(1, 64, 12.0)
        cfg = PropagatorConfig(dt=1e-3, t_end=1.0, record_every=100)
        log = evolve(gaussian(lat), FREE, NO_PAIR, cfg)
        assert log.outcome == "completed"
        r0, r1 = log.records[0], log.records[-1]
        assert abs(r1.charge - r0.charge) / r0.charge < 1e-12
        assert abs(r1.energy - r0.energy) / abs(r0.energy) < 1e-10

    def test_record_grid(self):
        lat = Lattice(1, 32, 8.0)
        cfg = PropagatorConfig(dt=1e-2, t_end=0.2, record_every=5)
        log = evolve(gaussian(lat), FREE, NO_PAIR, cfg)
        assert log.records[0].t == 0.0
        assert np.allclose(np.diff(log.times()), 0.05)
        assert log.times()[-1] == pytest.approx(0.2)

    def test_observer_called(self):
        lat = Lattice(1, 32, 8.0)
        seen = []
        cfg = PropagatorConfig(dt=1e-2, t_end=0.1, record_every=5)
        evolve(gaussian(lat), FREE, NO_PAIR, cfg,
               observer=lambda t, f: seen.append(t))
        assert len(seen) == 3  # t = 0, 0.05, 0.1

    def test_requires_charge(self):
        lat = Lattice(1, 32, 8.0)
        with pytest.raises(ValueError):
            evolve(Field.zeros(lat), FREE, NO_PAIR,
                   PropagatorConfig(dt=1e-2, t_end=0.1))

    def test_snapshots_stored(self):
        lat = Lattice(1, 32, 8.0)
        cfg = PropagatorConfig(dt=1e-2, t_end=0.1, record_every=5,
                               snapshot_every=1)
        log = evolve(gaussian(lat), FREE, NO_PAIR, cfg)
        assert len(log.snapshots) == 3
        assert isinstance(log.snapshots[0][1], Field)


class TestInvariantsAlongFlow:
    def test_momentum_angular_momentum_conserved(self):
        lat = Lattice(3, 32, 8.0)
        phi = TwoBodyPotential(kind="gaussian", sign=-1, nu=0.8, width=1.0)
        psi = boost(gaussian(lat, width=1.0), [0.4, 0.0, 0.0])
        cfg = PropagatorConfig(dt=2e-3, t_end=0.5, record_every=50)
        log = evolve(psi, FREE, phi, cfg)
        P0 = np.atleast_1d(log.records[0].momentum)
        for r in log.records:
            assert np.max(np.abs(np.atleast_1d(r.momentum) - P0)) < 1e-8
            assert np.max(np.abs(r.angular_momentum
                                 - log.records[0].angular_momentum)) < 1e-8

    def test_com_inertia_for_boosted_packet(self):
        lat = Lattice(1, 64, 16.0)
        phi = TwoBodyPotential(kind="gaussian", sign=-1, nu=0.5, width=1.0)
        psi = boost(gaussian(lat, width=1.0), [0.5])
        cfg = PropagatorConfig(dt=1e-3, t_end=1.0, record_every=100)
        log = evolve(psi, FREE, phi, cfg)
        assert com_inertia_residual(log) < 1e-6

    def test_variance_identity_free_case(self):
        # nu = 0: variance'' = 16 H0 exactly (free spreading)
        lat = Lattice(1, 64, 16.0)
        psi = gaussian(lat, width=1.2)
        cfg = PropagatorConfig(dt=1e-3, t_end=0.5, record_every=25)
        log = evolve(psi, FREE, TwoBodyPotential(kind="power_law", sigma=1.0,
                                                 sign=-1, nu=0.0), cfg)
        H0 = log.records[0].energy
        res = variance_identity_residual(log, sigma=1.0, H0=H0)
        assert res < 1e-5 * abs(16 * H0)


class TestBlowupDetection:
    def test_gradnorm_trigger(self):
        # the focusing local kernel in 2d is mass-critical: negative-energy
        # data above the critical mass collapse in finite time
        lat = Lattice(2, 64, 8.0)
        phi = TwoBodyPotential(kind="delta", sign=-1, nu=10.0)
        psi = gaussian(lat, width=0.7, N=2.0)
        cfg = PropagatorConfig(dt=2e-4, t_end=2.0, record_every=20,
                               blowup_gradnorm_factor=5.0)
        log = evolve(psi, FREE, phi, cfg)
        assert log.outcome == "blowup_detected"
        assert log.t_event is not None and log.t_event < 2.0

    def test_no_false_trigger(self):
        lat = Lattice(1, 64, 8.0)
        phi = TwoBodyPotential(kind="delta", sign=+1, nu=1.0)
        cfg = PropagatorConfig(dt=1e-3, t_end=0.5, record_every=50,
                               blowup_gradnorm_factor=10.0)
        log = evolve(gaussian(lat), FREE, phi, cfg)
        assert log.outcome == "completed"


class TestBoost:
    def test_identity(self):
        lat = Lattice(2, 16, 3.0)
        f = gaussian(lat, width=0.8)
        g = boost(f, [0.0, 0.0], dshift=[0.0, 0.0], gamma=0.0)
        assert np.max(np.abs(g.values - f.values)) < 1e-15

    def test_momentum_gain(self):
        lat = Lattice(2, 32, 6.0)
        f = gaussian(lat, width=1.0)
        v = np.array([0.7, -0.3])
        P = momentum(boost(f, v))
        assert np.allclose(P, 0.5 * v * charge(f), atol=1e-12)

    def test_group_inverse(self):
        lat = Lattice(1, 32, 4.0)
        f = gaussian(lat, width=0.7)
        g = boost(boost(f, [0.9]), [-0.9])
        assert np.max(np.abs(g.values - f.values)) < 1e-12

    def test_charge_preserved_exactly(self):
        lat = Lattice(1, 32, 4.0)
        f = gaussian(lat, width=0.7)
        g = boost(f, [0.3], dshift=[1.234], gamma=0.5)
        assert charge(g) == pytest.approx(charge(f), rel=1e-13)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PropagatorConfig(dt=-1.0, t_end=1.0)
        with pytest.raises(ValueError):
            PropagatorConfig(dt=1e-3, t_end=1.0, blowup_gradnorm_factor=0.5)
