"""Constrained energy minimization for the nonlinear eigenvalue problem

    -Laplacian Q + lam V Q + nu (Phi * |Q|^2) Q = -omega Q,   ||Q||_2^2 = N.

The solver runs two stages.  Stage one is a normalized gradient flow realized
as Strang-split imaginary-time stepping with an energy-descent monitor (an
energy increase halves the pseudo-time step).  Plain first-order flows carry
an O(tau*omega) bias in the solved coupling, so stage two finishes to the
requested residual: for translation-invariant problems a stabilized
fixed-point iteration at fixed omega (cubic-degree stabilizing exponent 3/2)
wrapped in a secant loop on omega that matches the charge constraint; with an
external trap a damped self-consistent eigen-iteration on the frozen mean
field.  The same fixed-point iteration, run at fixed omega without a charge
target, yields the critical points of the scale-invariant case sigma = 2
where energy descent is unavailable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import grid
from .grid import Field, Lattice
from .observables import charge, energy, grad_norm_sq
from .potentials import (ExternalPotential, KineticKind, TwoBodyPotential,
                         kernel_symbol, periodization_offset, sample_V)

__all__ = [
    "GroundState",
    "EnergyCurve",
    "NoGroundStateError",
    "UnboundedEnergyError",
    "minimize",
    "critical_point",
    "energy_curve",
    "check_subadditivity",
    "dual_slope_check",
    "scaling_exponent",
    "virial_check",
    "symmetry_check",
    "e0",
    "check_scaling_instability",
]


class NoGroundStateError(RuntimeError):
    """Flow spread to zero or the fixed point iteration found no soliton."""


class UnboundedEnergyError(ValueError):
    """Energy not bounded below on the charge sphere (power law sigma >= 2)."""


@dataclass
class GroundState:
    Q: Field
    N: float
    omega: float
    E: float
    residual: float

    def __post_init__(self):
        got = charge(self.Q)
        if abs(got - self.N) > 1e-8 * max(self.N, 1.0):
            raise ValueError(f"stored charge {self.N} differs from charge(Q)={got}")
        vals = self.Q.values.real
        if vals.min() < -1e-8 * max(vals.max(), 1e-300):
            raise ValueError("ground state must be nonnegative after phase fixing")


@dataclass
class EnergyCurve:
    """Ground-state samples (N, E, omega).  ``E_free``/``omega_free`` carry
    the periodization-offset-corrected readings (identical to E/omega for
    kernels without a reported offset), comparable across box sizes."""

    N: np.ndarray
    E: np.ndarray
    omega: np.ndarray
    residual: np.ndarray
    potential: Optional[TwoBodyPotential] = None
    external: Optional[ExternalPotential] = None
    states: list = field(default_factory=list)
    offset: float = 0.0

    def __post_init__(self):
        self.N = np.asarray(self.N, dtype=float)
        self.E = np.asarray(self.E, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.residual = np.asarray(self.residual, dtype=float)
        if np.any(np.diff(self.N) <= 0):
            raise ValueError("curve samples must be strictly increasing in N")

    @property
    def nu(self) -> float:
        return self.potential.nu if self.potential is not None else 0.0

    @property
    def E_free(self) -> np.ndarray:
        return self.E - 0.25 * self.nu * self.offset * self.N ** 2

    @property
    def omega_free(self) -> np.ndarray:
        return self.omega + self.nu * self.offset * self.N


class _Problem:
    """Cached lattice arrays for one (lattice, V, Phi) combination."""

    def __init__(self, lat: Lattice, V: ExternalPotential, phi: TwoBodyPotential):
        self.lat = lat
        self.V = V
        self.phi = phi
        self.k2r = np.ascontiguousarray(lat.k_squared()[..., : lat.n // 2 + 1])
        self.vol = lat.volume_element
        self.Vs = sample_V(V, lat).values.real if V.lam != 0.0 else None
        if phi.nu != 0.0:
            sym = kernel_symbol(phi, lat)
            self.sym_r = np.ascontiguousarray(sym[..., : lat.n // 2 + 1])
        else:
            self.sym_r = None

    def mean_field(self, rho):
        if self.sym_r is None:
            return np.zeros_like(rho)
        return self.phi.nu * grid.convolve_real(self.sym_r, rho)

    def full_potential(self, rho):
        W = self.mean_field(rho)
        if self.Vs is not None:
            W = W + self.Vs
        return W

    def apply_lap(self, v):
        return grid._irfftn(self.k2r * grid._rfftn(v), v.shape)

    def rayleigh(self, Q):
        """(omega, residual, N) for the current iterate."""
        rho = Q * Q
        W = self.full_potential(rho)
        HQ = self.apply_lap(Q) + W * Q
        N = self.vol * rho.sum()
        om = -self.vol * (Q * HQ).sum() / N
        res = float(np.sqrt(self.vol * ((HQ + om * Q) ** 2).sum() / N))
        return float(om), res, float(N)

    def energy_of(self, Q):
        rho = Q * Q
        Qk = grid._rfftn(Q)
        # rfft Parseval: double the non-redundant half spectrum
        w = np.full(self.k2r.shape, 2.0)
        w[..., 0] = 1.0
        if self.lat.n % 2 == 0:
            w[..., -1] = 1.0
        K = (self.vol / self.lat.size) * (w * self.k2r
                                          * (Qk.real ** 2 + Qk.imag ** 2)).sum()
        out = K
        if self.Vs is not None:
            out += self.vol * (self.Vs * rho).sum()
        if self.sym_r is not None:
            out += 0.5 * self.vol * (self.mean_field(rho) * rho).sum()
        return 0.5 * float(out)


def _seed_field(pr: _Problem, N: float, seed, width=None) -> np.ndarray:
    """Positive soliton-scale gaussian seed with a seeded smooth perturbation.

    Kept narrow: from box-filling seeds the fixed-point iteration can lock
    onto the spatially uniform branch instead of a soliton."""
    rng = np.random.default_rng(seed)
    lat = pr.lat
    if width is None:
        width = min(1.5, 0.25 * lat.half_width) * (1.0 + 0.2 * rng.random())
    r2 = sum(x ** 2 for x in lat.coords())
    Q = np.exp(-r2 / (2.0 * width ** 2))
    bump = rng.standard_normal(lat.shape)
    bump = grid._irfftn(grid._rfftn(bump) * np.exp(-2.0 * pr.k2r), lat.shape)
    Q = Q * (1.0 + 0.05 * bump / max(np.abs(bump).max(), 1e-300))
    Q = np.abs(Q)
    Q *= np.sqrt(N / (pr.vol * (Q * Q).sum()))
    return Q


def _flow(pr: _Problem, Q, N, tau0=0.1, maxit=600, res_target=1e-6):
    """Strang imaginary-time normalized flow with energy-descent control."""
    tau = tau0
    kin = np.exp(-0.5 * tau * pr.k2r)
    E_prev = pr.energy_of(Q)
    spreading = 0
    for it in range(maxit):
        Qs = grid._irfftn(kin * grid._rfftn(Q), Q.shape)
        W = pr.full_potential(Qs * Qs)
        Qs = Qs * np.exp(-tau * W)
        Qs = grid._irfftn(kin * grid._rfftn(Qs), Q.shape)
        Qs *= np.sqrt(N / (pr.vol * (Qs * Qs).sum()))
        E = pr.energy_of(Qs)
        if E > E_prev + 1e-12 * max(abs(E_prev), 1.0):
            tau *= 0.5
            if tau < 1e-4:
                break
            kin = np.exp(-0.5 * tau * pr.k2r)
            continue
        Q, E_prev = Qs, E
        if it % 25 == 24:
            om, res, _ = pr.rayleigh(Q)
            if res < res_target:
                break
            # spreading guard: energy pinned at ~0 with vanishing gradient
            if pr.Vs is None and abs(E) < 1e-10 * max(N, 1.0) and om < 1e-10:
                spreading += 1
                if spreading >= 3:
                    raise NoGroundStateError(
                        "flow spreads toward zero: energy tends to 0- with "
                        "vanishing multiplier (charge below the binding threshold)")
    return Q


def _petviashvili(pr: _Problem, om: float, Q0, tol=1e-13, maxit=500):
    """Stabilized fixed-point iteration at fixed omega (lam = 0 kernels)."""
    Q = Q0.copy()
    for it in range(maxit):
        F = -pr.mean_field(Q * Q) * Q
        Fk = grid._rfftn(F)
        MQ = grid._irfftn((pr.k2r + om) * grid._rfftn(Q), Q.shape)
        den = (Q * F).sum()
        if den <= 0 or not np.isfinite(den):
            raise NoGroundStateError(
                f"fixed-point iteration lost positivity at omega={om:.3g}")
        gam = (Q * MQ).sum() / den
        Qn = grid._irfftn((gam ** 1.5) * Fk / (pr.k2r + om), Q.shape)
        sup = np.abs(Qn).max()
        if not np.isfinite(sup) or sup == 0.0:
            raise NoGroundStateError(
                f"fixed-point iteration diverged at omega={om:.3g}")
        delta = np.abs(Qn - Q).max() / sup
        Q = Qn
        if delta < tol:
            break
    return Q


def wrapped_centroid(lat: Lattice, rho) -> np.ndarray:
    """Center of mass with minimum-image displacements about the density
    peak; exact for localized densities at any position in the box."""
    peak = np.unravel_index(np.argmax(rho), rho.shape)
    L = 2.0 * lat.half_width
    c = np.empty(lat.d)
    mass = rho.sum()
    for a, (x, p) in enumerate(zip(lat.coords(), peak)):
        x_p = -lat.half_width + lat.h * p
        delta = (x - x_p + lat.half_width) % L - lat.half_width
        c[a] = x_p + (delta * rho).sum() / mass
    return c


def _recenter(pr: _Problem, Q, om, tol):
    """Move a translation-degenerate soliton to the box center.

    Integer lattice moves are exact rolls; the sub-lattice remainder is a
    spectral shift whose interpolation artifacts (the profile decays
    exponentially, so its spectrum has a visible tail) are relaxed away by a
    short fixed-point polish at the converged omega.
    """
    lat = pr.lat
    for _ in range(3):
        c = wrapped_centroid(lat, Q * Q)
        if np.max(np.abs(c)) < 1e-9:
            break
        steps = np.round(c / lat.h).astype(int)
        Q = np.roll(Q, tuple(-steps), axis=tuple(range(lat.d)))
        resid = c - steps * lat.h
        if np.max(np.abs(resid)) > 1e-12:
            Q = grid.spectral_shift(Field(lat, Q.astype(complex)),
                                    -resid).values.real
        Q = _petviashvili(pr, om, Q, tol=max(0.01 * tol, 1e-14), maxit=120)
    return Q


def _secant_on_omega(pr: _Problem, N_target: float, Q, tol):
    """Match the charge constraint by secant iteration on log omega.

    Runs in the caller's gauge; with the neutral zero mode the uniform state
    sits at exactly zero multiplier, so keeping omega positive confines the
    iteration to the soliton branch.
    """
    inner = max(0.01 * tol, 1e-14)
    om_floor = 1e-4
    om0, _, _ = pr.rayleigh(Q)
    lo = np.log(max(om0, (1.5 / pr.lat.half_width) ** 2))
    Q = _petviashvili(pr, float(np.exp(lo)), Q, tol=inner)
    f1 = np.log(pr.vol * (Q * Q).sum()) - np.log(N_target)
    if abs(f1) < 1e-11:
        om_final, _, _ = pr.rayleigh(Q)
        Q = _recenter(pr, Q, max(om_final, 1e-6), tol)
        Q *= np.sqrt(N_target / (pr.vol * (Q * Q).sum()))
        return Q
    lo2 = lo + (0.5 if f1 < 0 else -0.5)
    f_prev, lo_prev = f1, lo
    for _ in range(40):
        Q = _petviashvili(pr, float(np.exp(lo2)), Q, tol=inner)
        f2 = np.log(pr.vol * (Q * Q).sum()) - np.log(N_target)
        if abs(f2) < 1e-11:
            break
        denom = f2 - f_prev
        step = -f2 * (lo2 - lo_prev) / denom if denom != 0 else 0.0
        lo_prev, f_prev = lo2, f2
        lo2 = max(lo2 + float(np.clip(step, -1.0, 1.0)), np.log(om_floor))
    else:
        raise NoGroundStateError(
            f"charge targeting did not converge (last mismatch {f2:.2e}); "
            "the requested charge may lie below the binding threshold")
    om_final, _, _ = pr.rayleigh(Q)
    Q = _recenter(pr, Q, max(om_final, 1e-6), tol)
    Q *= np.sqrt(N_target / (pr.vol * (Q * Q).sum()))
    return Q


def _scf_polish(pr: _Problem, Q, N, tol, max_cycles=60):
    """Damped self-consistent eigen-iteration (trap case finisher)."""
    size = Q.size
    shape = Q.shape
    om, res, _ = pr.rayleigh(Q)
    for _ in range(max_cycles):
        if res < tol:
            break
        W = pr.full_potential(Q * Q)

        def mv(v):
            v = v.reshape(shape)
            return (pr.apply_lap(v) + W * v).ravel()

        A = spla.LinearOperator((size, size), matvec=mv, dtype=float)
        _, vecs = spla.eigsh(A, k=1, which="SA", v0=Q.ravel(),
                             tol=min(1e-12, 0.01 * tol))
        Qn = vecs[:, 0].reshape(shape)
        if (Qn * Q).sum() < 0:
            Qn = -Qn
        Qn *= np.sqrt(N / (pr.vol * (Qn * Qn).sum()))
        Q = 0.5 * (Q + Qn)
        Q *= np.sqrt(N / (pr.vol * (Q * Q).sum()))
        om, res, _ = pr.rayleigh(Q)
    return Q


def check_scaling_instability(phi: TwoBodyPotential, N: float,
                              widths=None) -> dict:
    """Probe H on a gaussian family psi_a to detect E(N) = -infinity.

    For attractive power laws the kinetic term scales as a^-2 and the
    interaction as -a^-sigma, so sigma > 2 is always unbounded below and
    sigma = 2 is unbounded once nu N exceeds a threshold; either way the
    constrained minimization must be refused.
    """
    if widths is None:
        widths = np.geomspace(0.05, 4.0, 24)
    if phi.kind != "power_law":
        return {"unbounded": False, "widths": widths, "energies": None}
    sigma = phi.sigma
    # gaussian family psi_a with unit charge: H(a) = c_k N/a^2 + sign nu c_i N^2/a^sigma
    c_k = 0.75
    c_i = 0.25 * _powerlaw_interaction_constant(sigma)
    energies = (c_k * N / widths ** 2
                + phi.sign * phi.nu * c_i * N ** 2 / widths ** sigma)
    if phi.sign < 0 and sigma > 2.0:
        unbounded = True
    elif phi.sign < 0 and sigma == 2.0:
        unbounded = bool(phi.nu * c_i * N > c_k)
    else:
        unbounded = False
    return {"unbounded": unbounded, "widths": widths, "energies": energies,
            "sigma": sigma}


def _powerlaw_interaction_constant(sigma: float) -> float:
    """int (|x|^-sigma * rho) rho for a unit-charge gaussian of unit width."""
    from math import gamma as _g
    # rho ~ (2 pi)^{-3/2} e^{-r^2/2}: the double integral reduces to
    # E|X|^{-sigma} with X ~ Normal(0, 2 I3)
    return 2.0 ** (-sigma / 2.0) * _g((3.0 - sigma) / 2.0) / _g(1.5)


def minimize(N: float, V: ExternalPotential, phi: TwoBodyPotential,
             lat: Lattice, tol: float = 1e-8, seed: int = 0,
             warm_start: Optional[Field] = None,
             flow_iters: int = 600) -> GroundState:
    """Hartree ground state at charge N.

    Raises :class:`UnboundedEnergyError` for power laws with sigma >= 2
    (energy descent meaningless; see :func:`critical_point`), and
    :class:`NoGroundStateError` when the charge sits below the binding
    threshold of a short-range kernel.
    """
    if N <= 0:
        raise ValueError("charge N must be positive")
    if phi.nu != 0.0 and phi.kind == "power_law" and phi.sigma >= 2.0:
        probe = check_scaling_instability(phi, N)
        raise UnboundedEnergyError(
            f"power-law kernel with sigma={phi.sigma} is not bounded from below "
            "on the charge sphere (gaussian scaling probe verdict: "
            f"unbounded={probe['unbounded']}); compute critical points with "
            "the fixed-point solver instead")
    if phi.nu != 0.0 and not phi.attractive and V.lam == 0.0:
        raise NoGroundStateError("repulsive kernel without a trap binds nothing")
    if phi.nu == 0.0 and V.lam == 0.0:
        raise NoGroundStateError("free problem has no ground state")

    pr = _Problem(lat, V, phi)
    translation_invariant = V.lam == 0.0 and phi.nu != 0.0
    if translation_invariant:
        # neutral gauge pins the uniform branch at omega = 0 exactly, so a
        # positive-multiplier secant can only land on solitons
        k_box = (np.pi / lat.half_width) ** 2

        def solve_from(Q0):
            Qs = np.abs(Q0)
            Qs *= np.sqrt(N / (pr.vol * (Qs * Qs).sum()))
            Qs = _secant_on_omega(pr, N, Qs, tol)
            spread = grad_norm_sq(Field(lat, Qs.astype(complex))) / N < 0.25 * k_box
            return Qs, spread

        Q, spread = solve_from(warm_start.values.real.copy()
                               if warm_start is not None
                               else _seed_field(pr, N, seed))
        if spread:
            # retry once from a tighter profile before giving up
            Q, spread = solve_from(_seed_field(pr, N, seed, width=0.75))
        if spread:
            raise NoGroundStateError(
                "solution spread to the box scale; the requested charge is too"
                " small for this box (or below the binding threshold)")
    else:
        Q = (warm_start.values.real.copy() if warm_start is not None
             else _seed_field(pr, N, seed))
        Q = np.abs(Q)
        Q *= np.sqrt(N / (pr.vol * (Q * Q).sum()))
        Q = _flow(pr, Q, N, res_target=max(tol, 1e-6), maxit=flow_iters)
        om, res, _ = pr.rayleigh(Q)
        if res > tol:
            Q = _scf_polish(pr, Q, N, tol)
    Q *= np.sqrt(N / (pr.vol * (Q * Q).sum()))
    om, res, Ngot = pr.rayleigh(Q)
    if res > max(10 * tol, 1e-7):
        raise NoGroundStateError(
            f"solver stalled at residual {res:.2e} (tol {tol:.1e})")
    if Q.sum() < 0:
        Q = -Q
    Qf = Field(lat, Q.astype(complex))
    return GroundState(Q=Qf, N=float(Ngot), omega=float(om),
                       E=pr.energy_of(Q), residual=float(res))


def critical_point(phi: TwoBodyPotential, lat: Lattice, omega: float = 1.0,
                   tol: float = 1e-12, seed_width: float = 1.0) -> GroundState:
    """Soliton profile at fixed omega via the stabilized fixed-point iteration.

    This is the route to the sigma = 2 critical points (charge is not free
    there: it comes out at the critical value) and works for any attractive
    translation-invariant kernel.
    """
    if not phi.attractive:
        raise ValueError("critical points require an attractive kernel")
    free = ExternalPotential(kind="zero", lam=0.0)
    pr = _Problem(lat, free, phi)
    phi_solve = (replace(phi, gauge="matched", gauge_offset={})
                 if phi.kind == "power_law" and phi.gauge == "neutral" else phi)
    pr_solve = _Problem(lat, free, phi_solve) if phi_solve is not phi else pr
    r2 = sum(x ** 2 for x in lat.coords())
    Q0 = np.exp(-r2 / (2.0 * seed_width ** 2))
    Q = _petviashvili(pr_solve, omega, Q0, tol=tol)
    Q = _recenter(pr_solve, Q, omega, tol)
    om, res, N = pr.rayleigh(Q)
    if Q.sum() < 0:
        Q = -Q
    return GroundState(Q=Field(lat, Q.astype(complex)), N=N, omega=float(om),
                       E=pr.energy_of(Q), residual=float(res))


def energy_curve(N_list, V: ExternalPotential, phi: TwoBodyPotential,
                 lat: Lattice, tol: float = 1e-8, seed: int = 0) -> EnergyCurve:
    """Ground states along increasing N, warm-starting each solve from the
    previous profile rescaled to the next charge."""
    N_list = sorted(float(x) for x in N_list)
    Es, oms, ress, states = [], [], [], []
    prev = None
    for NN in N_list:
        gs = minimize(NN, V, phi, lat, tol=tol, seed=seed, warm_start=prev)
        prev = gs.Q
        Es.append(gs.E)
        oms.append(gs.omega)
        ress.append(gs.residual)
        states.append(gs)
    offset = periodization_offset(phi, lat) if phi.nu != 0.0 else 0.0
    return EnergyCurve(N=np.array(N_list), E=np.array(Es), omega=np.array(oms),
                       residual=np.array(ress), potential=phi, external=V,
                       states=states, offset=offset)


@dataclass
class SubadditivityReport:
    alphas: np.ndarray
    margins: np.ndarray      # E(N) - E(alpha) - E(N-alpha), negative = pass
    worst: float
    passed: bool


def check_subadditivity(curve: EnergyCurve, alpha_grid=None) -> SubadditivityReport:
    """Strict sub-additivity E(N) < E(alpha) + E(N-alpha) on sampled pairs.

    alpha runs over curve samples for which N - alpha is also sampled (up to
    rounding); the binding margin E(N)-E(alpha)-E(N-alpha) must be < 0.
    """
    Ns, Es = curve.N, curve.E_free
    N = Ns[-1]
    E_N = Es[-1]
    alphas, margins = [], []
    grid_a = alpha_grid if alpha_grid is not None else Ns[:-1]
    for a in grid_a:
        if not (0 < a < N):
            continue
        ia = np.argmin(np.abs(Ns - a))
        ib = np.argmin(np.abs(Ns - (N - a)))
        if abs(Ns[ia] - a) > 1e-9 * N or abs(Ns[ib] - (N - a)) > 1e-9 * N:
            continue
        alphas.append(a)
        margins.append(E_N - Es[ia] - Es[ib])
    if not alphas:
        raise ValueError("curve samples do not cover any (alpha, N-alpha) pair")
    alphas = np.array(alphas)
    margins = np.array(margins)
    worst = float(margins.max())
    return SubadditivityReport(alphas=alphas, margins=margins, worst=worst,
                               passed=bool(worst < 0.0))


@dataclass
class SlopeReport:
    N_mid: np.ndarray
    dE_dN: np.ndarray
    neg_half_omega: np.ndarray
    rel_error: np.ndarray
    omega_increasing: bool
    E_concave: bool
    passed: bool
    inconclusive: bool = False


def dual_slope_check(curve: EnergyCurve, rel_tol: float = 0.02) -> SlopeReport:
    """E'(N) = -omega/2 by central differences, plus stability bookkeeping:
    omega increasing in N (so dN/domega > 0) and E concave."""
    if len(curve.N) < 4:
        raise ValueError("need at least 4 curve samples")
    inconclusive = bool(np.any(curve.residual > 1e-4))
    Ns, Es, oms = curve.N, curve.E, curve.omega
    dE = (Es[2:] - Es[:-2]) / (Ns[2:] - Ns[:-2])
    target = -0.5 * oms[1:-1]
    rel = np.abs(dE - target) / np.abs(target)
    d2E = np.diff(Es, 2)
    return SlopeReport(
        N_mid=Ns[1:-1], dE_dN=dE, neg_half_omega=target, rel_error=rel,
        omega_increasing=bool(np.all(np.diff(oms) > 0)),
        E_concave=bool(np.all(d2E < 1e-12)),
        passed=bool(np.all(rel < rel_tol)) and not inconclusive,
        inconclusive=inconclusive,
    )


def scaling_exponent(phi: TwoBodyPotential, lat: Lattice, omega_list,
                     tol: float = 1e-12) -> dict:
    """Fit N[Q_omega] = C omega^p over a family of fixed-omega solitons.

    For attractive power laws the prediction is p = 1 - sigma/2; at sigma = 2
    the charge is omega-independent (p = 0), the instability-boundary
    diagnostic.  The fitted omega is the free-space multiplier, i.e. the
    lattice multiplier corrected by the reported periodization offset.
    """
    omega_list = sorted(float(w) for w in omega_list)
    if len(omega_list) < 3:
        raise ValueError("need at least 3 omega samples")
    Ns, oms_free = [], []
    free = ExternalPotential(kind="zero", lam=0.0)
    phi_solve = (replace(phi, gauge="matched", gauge_offset={})
                 if phi.kind == "power_law" and phi.gauge == "neutral" else phi)
    pr = _Problem(lat, free, phi_solve)
    r2 = sum(x ** 2 for x in lat.coords())
    Q = np.exp(-r2 / 2.0)
    # solved at fixed matched-gauge multiplier = the free-space omega
    for om in omega_list:
        Q = _petviashvili(pr, om, Q, tol=tol)
        N = pr.vol * (Q * Q).sum()
        Ns.append(N)
        oms_free.append(om)
    Ns = np.array(Ns)
    oms_free = np.array(oms_free)
    p, logC = np.polyfit(np.log(oms_free), np.log(Ns), 1)
    return {"exponent": float(p), "C": float(np.exp(logC)),
            "omega": np.array(omega_list), "omega_free": oms_free, "N": Ns}


@dataclass
class VirialReport:
    H: float
    kinetic: float
    ratio: float
    applicable: bool


def virial_check(gs: GroundState, V: ExternalPotential,
                 phi: TwoBodyPotential) -> VirialReport:
    """|H[Q]| / (kinetic part of H); vanishes for sigma = 2 critical points.

    The energy is corrected by the reported periodization offset, so the
    statement compares against the free-space identity rather than the
    box-gauged value.  Inapplicable without interaction (then H equals the
    kinetic part)."""
    K_half = 0.5 * grad_norm_sq(gs.Q)
    H_raw = energy(gs.Q, V, phi)
    offset = periodization_offset(phi, gs.Q.lattice)
    H = H_raw - 0.25 * phi.nu * offset * gs.N ** 2
    applicable = phi.nu != 0.0
    return VirialReport(H=H, kinetic=K_half,
                        ratio=abs(H) / K_half if K_half > 0 else np.inf,
                        applicable=applicable)


@dataclass
class SymmetryReport:
    radial_deviation: float
    monotone: bool
    min_value: float
    positive: bool
    center: np.ndarray


def symmetry_check(gs_or_field, interior: float = 0.7) -> SymmetryReport:
    """Recenter at the centroid, then compare against the spherical average
    taken over exact equal-radius lattice shells (integer r^2 in lattice
    units), verify the shell profile is nonincreasing, and check positivity.

    The comparison runs over r <= interior * half_width: inside the boundary
    layer the periodic images reduce the symmetry of any lattice solution to
    the cubic group, which is an artifact of the box, not of the profile.
    """
    Q = gs_or_field.Q if hasattr(gs_or_field, "Q") else gs_or_field
    lat = Q.lattice
    rho = np.abs(Q.values) ** 2
    c = wrapped_centroid(lat, rho)
    # snap to the lattice with exact rolls, spectral shift for the remainder
    steps = np.round(c / lat.h).astype(int)
    vals_arr = np.roll(Q.values, tuple(-steps), axis=tuple(range(lat.d)))
    resid = c - steps * lat.h
    if np.max(np.abs(resid)) > 1e-12:
        vals_arr = grid.spectral_shift(Field(lat, vals_arr), -resid).values
    vals = vals_arr.real

    # lattice coordinate integers relative to the box center
    ints = (np.arange(lat.n) - lat.n // 2)
    mesh = np.meshgrid(*([ints] * lat.d), indexing="ij")
    r2int = sum(m.astype(np.int64) ** 2 for m in mesh).ravel()
    r2max = int((interior * lat.n / 2) ** 2)
    keep = r2int <= r2max
    order = np.unique(r2int[keep])
    lut = np.searchsorted(order, r2int[keep])
    flat = vals.ravel()[keep]
    sums = np.bincount(lut, weights=flat, minlength=order.size)
    cnts = np.bincount(lut, minlength=order.size)
    shell_mean = sums / cnts
    recon = shell_mean[lut]
    dev = (np.sqrt(((flat - recon) ** 2).sum())
           / max(np.sqrt((flat ** 2).sum()), 1e-300))
    peak = vals.max()
    monotone = bool(np.all(np.diff(shell_mean) <= 1e-6 * peak))
    mn = float(vals.min())
    return SymmetryReport(radial_deviation=float(dev), monotone=monotone,
                          min_value=mn, positive=bool(mn > -1e-8 * peak),
                          center=c)


def e0(V: ExternalPotential, phi: TwoBodyPotential, lat: Lattice,
       tol: float = 1e-8, seed: int = 0) -> float:
    """Ground energy density of the mean-field limit, inf {2 H : ||psi||^2 = 1}."""
    gs = minimize(1.0, V, phi, lat, tol=tol, seed=seed)
    return 2.0 * gs.E
