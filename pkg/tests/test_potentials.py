"""Potential catalog: classification, sampling, kernel symbols."""

import numpy as np
import pytest
from scipy.special import erf

from hartreelab.grid import Field, Lattice, SpectralPlan, convolve
from hartreelab.potentials import (ClassificationUndefinedError,
                                   ExternalPotential, KineticKind,
                                   TwoBodyPotential, is_subcritical,
                                   kernel_symbol, kinetic_symbol,
                                   mean_field_potential, sample_V)


def coulomb(nu=1.0, gauge="matched"):
    return TwoBodyPotential(kind="power_law", sigma=1.0, sign=-1, nu=nu,
                            gauge=gauge)


class TestSubcriticality:
    def test_coulomb_subcritical(self):
        assert is_subcritical(coulomb()) is True

    def test_critical_power(self):
        phi = TwoBodyPotential(kind="power_law", sigma=2.0, sign=-1, nu=1.0)
        assert is_subcritical(phi) is False

    @pytest.mark.parametrize("sigma,expect", [(0.5, True), (1.99, True),
                                              (2.0, False), (2.5, False)])
    def test_power_law_threshold(self, sigma, expect):
        phi = TwoBodyPotential(kind="power_law", sigma=sigma, sign=-1, nu=1.0)
        assert is_subcritical(phi) is expect

    def test_bounded_kernels(self):
        assert is_subcritical(TwoBodyPotential(kind="gaussian", width=0.1, nu=1.0))
        assert is_subcritical(TwoBodyPotential(kind="yukawa", mu=2.0, nu=1.0))
        assert not is_subcritical(TwoBodyPotential(kind="delta", nu=1.0))

    def test_wrong_dimension(self):
        with pytest.raises(ClassificationUndefinedError):
            is_subcritical(coulomb(), d=2)


class TestSampleV:
    def test_zero(self):
        lat = Lattice(2, 16, 3.0)
        V = ExternalPotential(kind="zero", lam=0.0)
        assert np.all(sample_V(V, lat).values == 0)

    def test_harmonic_values(self):
        lat = Lattice(3, 16, 4.0)
        V = ExternalPotential(kind="harmonic", lam=2.5)
        vals = sample_V(V, lat).values.real
        i0 = lat.n // 2
        assert vals[i0, i0, i0] == pytest.approx(0.0)
        ix = i0 + int(round(1.0 / lat.h))
        assert vals[ix, i0, i0] == pytest.approx(2.5 * 1.0)

    def test_slowly_varying_matches_rescaled_base(self):
        lat = Lattice(1, 32, 8.0)
        base = ExternalPotential(kind="gaussian_well", lam=1.0, depth=2.0,
                                 width=1.5)
        V = ExternalPotential(kind="slowly_varying", lam=0.7, eps=0.1, base=base)
        got = sample_V(V, lat).values.real
        x = lat.axis_coords()
        expect = 0.7 * (-2.0) * np.exp(-(0.1 * x) ** 2 / 1.5 ** 2)
        assert np.max(np.abs(got - expect)) < 1e-14

    def test_double_well_minima(self):
        lat = Lattice(1, 64, 8.0)
        V = ExternalPotential(kind="double_well", lam=1.0, depth=1.0,
                              width=0.8, separation=4.0)
        vals = sample_V(V, lat).values.real
        x = lat.axis_coords()
        i_plus = np.argmin(np.abs(x - 2.0))
        assert vals[i_plus] == pytest.approx(vals.min(), abs=1e-6)

    def test_negative_coupling_rejected(self):
        with pytest.raises(ValueError):
            ExternalPotential(kind="harmonic", lam=-1.0)


class TestKernelSymbol:
    def test_delta_all_ones(self):
        lat = Lattice(2, 16, 2.0)
        phi = TwoBodyPotential(kind="delta", sign=+1, nu=1.0)
        assert np.array_equal(kernel_symbol(phi, lat), np.ones(lat.shape))

    def test_gaussian_matches_quadrature_oracle(self):
        lat = Lattice(3, 32, 8.0)
        w = 1.5
        phi = TwoBodyPotential(kind="gaussian", sign=-1, nu=1.0, width=w)
        sym = kernel_symbol(phi, lat)
        k2 = lat.k_squared()
        expect = -(w * np.sqrt(np.pi)) ** 3 * np.exp(-w ** 2 * k2 / 4)
        assert np.max(np.abs(sym - expect)) < 1e-8
        # independent radial quadrature of the transform at two frequencies
        r = np.linspace(0, 40, 200001)
        for idx in [(1, 0, 0), (2, 3, 1)]:
            k = float(np.sqrt(sum(lat.axis_freqs()[i] ** 2 for i in idx)))
            integrand = r * np.exp(-r ** 2 / w ** 2) * np.sin(k * r)
            oracle = -(4 * np.pi / k) * np.trapezoid(integrand, r)
            assert sym[idx] == pytest.approx(oracle, abs=1e-8)

    def test_coulomb_gaussian_reproduces_erf_profile(self):
        # attractive 1/r kernel against a normalized gaussian density gives
        # -erf(r/(sqrt(2) w))/r up to the periodization gauge
        lat = Lattice(3, 128, 20.0)
        plan = SpectralPlan(lat)
        w = 0.5
        phi = coulomb()
        sym = kernel_symbol(phi, lat)
        r2 = sum(x ** 2 for x in lat.coords())
        rho = np.exp(-r2 / (2 * w ** 2)) / (2 * np.pi * w ** 2) ** 1.5
        out = convolve(plan, sym, Field(lat, rho.astype(complex))).values.real
        x = lat.axis_coords()
        sl = out[:, lat.n // 2, lat.n // 2]
        sel = (np.abs(x) > 0.25) & (np.abs(x) < 2.0)
        oracle = -erf(np.abs(x[sel]) / (np.sqrt(2) * w)) / np.abs(x[sel])
        diff = sl[sel] - oracle
        # matched gauge: no constant offset fit needed
        at = np.argmin(np.abs(np.abs(x[sel]) - 2 * w))
        assert abs(diff[at]) < 1e-4

    def test_radial_symmetry_of_symbols(self):
        lat = Lattice(3, 16, 4.0)
        rev = np.r_[0, lat.n - 1:0:-1]   # fft-index realization of k -> -k
        for phi in (coulomb(),
                    TwoBodyPotential(kind="gaussian", width=0.9, nu=1.0),
                    TwoBodyPotential(kind="yukawa", mu=0.7, nu=1.0),
                    TwoBodyPotential(kind="power_law", sigma=1.5, nu=1.0)):
            sym = kernel_symbol(phi, lat)
            assert np.max(np.abs(sym - np.transpose(sym, (1, 0, 2)))) < 1e-12
            assert np.max(np.abs(sym - np.transpose(sym, (2, 1, 0)))) < 1e-12
            flip = sym[np.ix_(rev, rev, rev)]
            assert np.max(np.abs(sym - flip)) < 1e-12

    def test_yukawa_to_coulomb_monotone(self):
        lat = Lattice(3, 16, 6.0)
        csym = kernel_symbol(coulomb(gauge="neutral"), lat)
        mask = lat.k_squared() > 0
        prev = None
        for mu in (2.0, 1.0, 0.5, 0.25, 0.1):
            ysym = kernel_symbol(
                TwoBodyPotential(kind="yukawa", mu=mu, sign=-1, nu=1.0), lat)
            gap = np.abs(ysym[mask] - csym[mask])
            if prev is not None:
                assert np.all(gap <= prev + 1e-15)
            prev = gap
        assert np.max(prev) < 0.05 * np.max(np.abs(csym[mask]))


class TestMeanFieldPotential:
    def test_zero_field(self):
        lat = Lattice(2, 16, 3.0)
        plan = SpectralPlan(lat)
        out = mean_field_potential(coulomb(gauge="neutral") if lat.d == 3
                                   else TwoBodyPotential(kind="gaussian", nu=1.0),
                                   plan, Field.zeros(lat))
        assert np.max(np.abs(out.values)) == 0.0

    def test_delta_kind_is_local_density(self):
        rng = np.random.default_rng(2)
        lat = Lattice(2, 16, 3.0)
        plan = SpectralPlan(lat)
        psi = Field(lat, rng.standard_normal(lat.shape)
                    + 1j * rng.standard_normal(lat.shape))
        phi = TwoBodyPotential(kind="delta", sign=+1, nu=1.7)
        out = mean_field_potential(phi, plan, psi)
        assert np.max(np.abs(out.values - 1.7 * np.abs(psi.values) ** 2)) < 1e-10

    def test_attractive_potential_nonpositive(self):
        rng = np.random.default_rng(4)
        lat = Lattice(3, 16, 4.0)
        plan = SpectralPlan(lat)
        psi = Field(lat, rng.random(lat.shape).astype(complex))
        for phi in (TwoBodyPotential(kind="gaussian", sign=-1, nu=1.0, width=1.0),
                    TwoBodyPotential(kind="yukawa", sign=-1, nu=1.0, mu=1.0)):
            out = mean_field_potential(phi, plan, psi)
            assert out.values.real.max() <= 1e-12

    def test_coulomb_well_monotone(self):
        lat = Lattice(3, 32, 8.0)
        plan = SpectralPlan(lat)
        r2 = sum(x ** 2 for x in lat.coords())
        psi = Field(lat, np.exp(-r2 / 2).astype(complex))
        out = mean_field_potential(coulomb(), plan, psi).values.real
        sl = out[lat.n // 2:, lat.n // 2, lat.n // 2]
        assert sl[0] == out.min()
        assert np.all(np.diff(sl[: lat.n // 4]) > 0)  # radially increasing well


class TestKinetic:
    def test_nonrelativistic_symbol(self):
        lat = Lattice(1, 16, 2.0)
        assert np.allclose(kinetic_symbol(KineticKind(), lat), lat.k_squared())

    def test_semirelativistic_limits(self):
        lat = Lattice(1, 32, 4.0)
        m = 40.0
        sym = kinetic_symbol(KineticKind(kind="semirelativistic", mass=m), lat)
        k2 = lat.k_squared()
        # heavy mass: sqrt(k^2+m^2)-m ~ k^2/(2m)
        assert np.max(np.abs(sym - k2 / (2 * m))) < np.max(k2) ** 2 / (2 * m ** 3)

    def test_mass_validation(self):
        with pytest.raises(ValueError):
            KineticKind(kind="semirelativistic", mass=-1.0)
