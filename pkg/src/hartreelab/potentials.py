"""External traps, two-body interaction kernels, and their lattice realizations.

Two-body kernels are handed to the spectral machinery as Fourier symbols.
Power-law kernels sign*|x|^-sigma use the analytic transform

    c(sigma) |k|^(sigma-3),   c(sigma) = 2^(3-sigma) pi^(3/2) Gamma((3-sigma)/2) / Gamma(sigma/2)

in d=3 (4 pi / k^2 for the Coulomb case sigma=1), sampled on the discrete
frequency grid with the zero mode neutralized (a periodized homogeneous
kernel has no mean).  Neutralization leaves the lattice kernel offset from
the free-space one by a constant near the box center (the lattice analogue
of a Madelung constant, vanishing as the box grows); that offset shifts
energies by (nu/4) offset N^2 and multipliers by -nu offset N without
touching the density dynamics, so it is *measured and reported* via
:func:`periodization_offset` and absolute energies stay comparable across
boxes.  The ``matched`` gauge, which instead absorbs the offset into the
zero mode, is kept for kernel-profile comparisons against free space; it is
not used for energy minimization because a nonzero zero mode hands the
spatially uniform state a spurious binding energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .grid import Field, Lattice

__all__ = [
    "ExternalPotential",
    "TwoBodyPotential",
    "KineticKind",
    "ClassificationUndefinedError",
    "is_subcritical",
    "sample_V",
    "kernel_symbol",
    "mean_field_potential",
    "periodization_offset",
    "kinetic_symbol",
]

EXTERNAL_KINDS = ("zero", "harmonic", "gaussian_well", "double_well", "slowly_varying")
TWOBODY_KINDS = ("power_law", "yukawa", "gaussian", "delta", "composite")


class ClassificationUndefinedError(ValueError):
    """Subcriticality is a d=3 notion; raised when queried elsewhere."""


@dataclass(frozen=True)
class ExternalPotential:
    """Trap V with coupling lambda; sample_V returns lambda*V(x).

    kinds: zero; harmonic |x|^2; gaussian_well (-depth e^{-|x|^2/width^2});
    double_well (two gaussian wells at +-separation/2 along the first axis);
    slowly_varying W(eps x) wrapping another kind.
    """

    kind: str = "zero"
    lam: float = 0.0
    depth: float = 1.0
    width: float = 1.0
    separation: float = 2.0
    eps: float = 1.0
    base: Optional["ExternalPotential"] = None

    def __post_init__(self):
        if self.kind not in EXTERNAL_KINDS:
            raise ValueError(f"unknown external potential kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("coupling lambda must be nonnegative")
        if self.kind in ("gaussian_well", "double_well") and self.width <= 0:
            raise ValueError("width must be positive")
        if self.kind == "slowly_varying":
            if self.eps <= 0:
                raise ValueError("eps must be positive")
            if self.base is None or self.base.kind == "slowly_varying":
                raise ValueError("slowly_varying must wrap a plain kind")

    def profile(self, coords) -> np.ndarray:
        """V(x) without the coupling, on arbitrary coordinate arrays."""
        if self.kind == "zero":
            return np.zeros_like(coords[0])
        if self.kind == "harmonic":
            return sum(x ** 2 for x in coords)
        if self.kind == "gaussian_well":
            r2 = sum(x ** 2 for x in coords)
            return -self.depth * np.exp(-r2 / self.width ** 2)
        if self.kind == "double_well":
            a = 0.5 * self.separation
            r2p = (coords[0] - a) ** 2 + sum(x ** 2 for x in coords[1:])
            r2m = (coords[0] + a) ** 2 + sum(x ** 2 for x in coords[1:])
            return -self.depth * (np.exp(-r2p / self.width ** 2)
                                  + np.exp(-r2m / self.width ** 2))
        # slowly_varying: W(eps x)
        return self.base.profile([self.eps * x for x in coords])

    def gradient_profile(self, points: np.ndarray) -> np.ndarray:
        """grad V at a (m, d) array of points (used by the reduced dynamics)."""
        points = np.atleast_2d(points)
        if self.kind == "zero":
            return np.zeros_like(points)
        if self.kind == "harmonic":
            return 2.0 * points
        if self.kind == "gaussian_well":
            r2 = (points ** 2).sum(axis=1, keepdims=True)
            return (2.0 * self.depth / self.width ** 2) * points * np.exp(-r2 / self.width ** 2)
        if self.kind == "double_well":
            a = np.zeros(points.shape[1]); a[0] = 0.5 * self.separation
            out = np.zeros_like(points)
            for s in (+1.0, -1.0):
                q = points - s * a
                r2 = (q ** 2).sum(axis=1, keepdims=True)
                out += (2.0 * self.depth / self.width ** 2) * q * np.exp(-r2 / self.width ** 2)
            return out
        return self.eps * self.base.gradient_profile(self.eps * points)


@dataclass(frozen=True)
class TwoBodyPotential:
    """Interaction kernel Phi with coupling nu and sign (+1 repulsive, -1 attractive).

    kinds: power_law |x|^-sigma (sigma in (0,3)); yukawa e^{-mu|x|}/|x|;
    gaussian e^{-|x|^2/width^2}; delta (local Gross-Pitaevskii limit);
    composite short + long(eps x).  ``amplitude`` scales the kernel shape
    (handy for composite parts whose relative strength matters); ``gauge``
    picks the zero-mode convention for homogeneous kernels.
    """

    kind: str = "gaussian"
    nu: float = 0.0
    sign: int = -1
    sigma: float = 1.0
    mu: float = 1.0
    width: float = 1.0
    amplitude: float = 1.0
    gauge: str = "neutral"  # or "matched" (zero mode cancels the offset)
    short: Optional["TwoBodyPotential"] = None
    long: Optional["TwoBodyPotential"] = None
    eps: float = 1.0
    gauge_offset: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in TWOBODY_KINDS:
            raise ValueError(f"unknown two-body potential kind {self.kind!r}")
        if self.nu < 0:
            raise ValueError("coupling nu must be nonnegative")
        if self.sign not in (-1, +1):
            raise ValueError("sign must be -1 (attractive) or +1 (repulsive)")
        if self.kind == "power_law" and not (0.0 < self.sigma < 3.0):
            raise ValueError("power-law exponent must lie in (0, 3)")
        if self.kind == "yukawa" and self.mu <= 0:
            raise ValueError("yukawa screening mu must be positive")
        if self.kind == "gaussian" and self.width <= 0:
            raise ValueError("gaussian kernel width must be positive")
        if self.gauge not in ("matched", "neutral"):
            raise ValueError("gauge must be 'matched' or 'neutral'")
        if self.kind == "composite":
            if self.short is None or self.long is None:
                raise ValueError("composite kernel needs short and long parts")
            if self.eps <= 0:
                raise ValueError("composite eps must be positive")

    @property
    def attractive(self) -> bool:
        if self.kind == "composite":
            return self.short.attractive
        return self.sign < 0

    def free_profile(self, r):
        """sign*amplitude*Phi(|x|) of the unperiodized kernel (r > 0)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "power_law":
            val = r ** (-self.sigma)
        elif self.kind == "yukawa":
            val = np.exp(-self.mu * r) / r
        elif self.kind == "gaussian":
            val = np.exp(-(r / self.width) ** 2)
        elif self.kind == "delta":
            raise ValueError("delta kernel has no pointwise profile")
        else:
            return (self.short.free_profile(r)
                    + self.long.free_profile(self.eps * r))
        return self.sign * self.amplitude * val

    def pair_gradient(self, dq: np.ndarray) -> np.ndarray:
        """grad Phi at displacement vectors dq, shape (m, d); smooth kinds only."""
        dq = np.atleast_2d(dq)
        if self.kind == "gaussian":
            r2 = (dq ** 2).sum(axis=1, keepdims=True)
            return self.sign * self.amplitude * (-2.0 / self.width ** 2) * dq * np.exp(-r2 / self.width ** 2)
        if self.kind == "composite":
            return (self.short.pair_gradient(dq)
                    + self.eps * self.long.pair_gradient(self.eps * dq))
        raise ValueError(f"pair_gradient undefined for kind {self.kind!r}")


@dataclass(frozen=True)
class KineticKind:
    """Dispersion choice: -Laplacian, or sqrt(-Laplacian + m^2) - m."""

    kind: str = "nonrelativistic"
    mass: float = 1.0

    def __post_init__(self):
        if self.kind not in ("nonrelativistic", "semirelativistic"):
            raise ValueError(f"unknown kinetic kind {self.kind!r}")
        if self.kind == "semirelativistic" and self.mass <= 0:
            raise ValueError("semirelativistic mass must be positive")


def kinetic_symbol(kinetic: KineticKind, lat: Lattice) -> np.ndarray:
    k2 = lat.k_squared()
    if kinetic.kind == "nonrelativistic":
        return k2
    m = kinetic.mass
    return np.sqrt(k2 + m ** 2) - m


def is_subcritical(phi: TwoBodyPotential, d: int = 3) -> bool:
    """Kernel decomposable as L^p + L^inf with p > 3/2 (d=3 semantics).

    Power laws are subcritical iff sigma < 2; yukawa and gaussian always,
    the delta kernel never (it is the local limit, outside the class).
    """
    if d != 3:
        raise ClassificationUndefinedError(
            f"subcriticality is only classified for d=3, got d={d}"
        )
    if phi.kind == "power_law":
        return phi.sigma < 2.0
    if phi.kind in ("yukawa", "gaussian"):
        return True
    if phi.kind == "delta":
        return False
    return is_subcritical(phi.short, d) and is_subcritical(phi.long, d)


def sample_V(V: ExternalPotential, lat: Lattice) -> Field:
    """Pointwise samples of lambda*V(x) on the lattice."""
    return Field(lat, (V.lam * V.profile(lat.coords())).astype(complex))


def _powerlaw_constant(sigma: float) -> float:
    """Continuum transform constant for |x|^-sigma in d=3."""
    return (2.0 ** (3.0 - sigma) * math.pi ** 1.5
            * math.gamma((3.0 - sigma) / 2.0) / math.gamma(sigma / 2.0))


def _matched_zero_mode(sym: np.ndarray, lat: Lattice, profile_fn) -> tuple:
    """Zero-mode value cancelling the periodization offset of a homogeneous kernel.

    The offset is read off by fitting const + c r^2 to the difference between
    the lattice kernel (inverse transform of the symbol) and the free-space
    profile over a shell away from both the origin and the box boundary.
    """
    ker = sfft.ifftn(sym).real * lat.size / lat.box_volume
    r = lat.wrapped_radius()
    r0 = np.roll(r, shift=(-(lat.n // 2),) * lat.d, axis=tuple(range(lat.d)))
    mask = (r0 > 3 * lat.h) & (r0 < 0.45 * lat.half_width)
    rr = r0[mask]
    diff = ker[mask] - profile_fn(rr)
    A = np.stack([np.ones_like(rr), rr ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(A, diff, rcond=None)
    return -coef[0] * lat.box_volume, float(coef[0])


def kernel_symbol(phi: TwoBodyPotential, lat: Lattice) -> np.ndarray:
    """Real Fourier symbol of the kernel on the lattice frequency grid.

    The coupling nu is *not* included; see :func:`mean_field_potential`.
    Homogeneous kernels in d=3 use analytic symbols with the gauge convention
    described in the module docstring; the applied zero-mode offset is cached
    on ``phi.gauge_offset`` for reporting.
    """
    if phi.kind == "delta":
        return phi.sign * phi.amplitude * np.ones(lat.shape)
    if phi.kind == "composite":
        long_scaled = _rescale_kernel(phi.long, phi.eps)
        return kernel_symbol(phi.short, lat) + kernel_symbol(long_scaled, lat)
    if phi.kind == "power_law" and lat.d == 3:
        c = _powerlaw_constant(phi.sigma)
        k2 = lat.k_squared()
        with np.errstate(divide="ignore"):
            sym = np.where(
                k2 > 0,
                phi.sign * phi.amplitude * c
                * np.where(k2 > 0, k2, 1.0) ** ((phi.sigma - 3.0) / 2.0),
                0.0,
            )
        zero_mode, offset = _matched_zero_mode(
            sym, lat, lambda r: phi.free_profile(r)
        )
        phi.gauge_offset[(lat.d, lat.n, lat.half_width)] = offset
        if phi.gauge == "matched":
            sym.flat[0] = zero_mode
        return sym
    if phi.kind == "yukawa" and lat.d == 3:
        k2 = lat.k_squared()
        return phi.sign * phi.amplitude * 4.0 * np.pi / (k2 + phi.mu ** 2)
    return _sampled_symbol(phi, lat)


def _rescale_kernel(phi: TwoBodyPotential, eps: float) -> TwoBodyPotential:
    """Kernel for Phi(eps x): widths scale by 1/eps, power laws by eps^sigma."""
    if phi.kind == "gaussian":
        return TwoBodyPotential(kind="gaussian", nu=phi.nu, sign=phi.sign,
                                width=phi.width / eps, amplitude=phi.amplitude,
                                gauge=phi.gauge)
    if phi.kind == "yukawa":
        return TwoBodyPotential(kind="yukawa", nu=phi.nu, sign=phi.sign,
                                mu=phi.mu * eps, amplitude=phi.amplitude,
                                gauge=phi.gauge)
    if phi.kind == "power_law":
        return TwoBodyPotential(kind="power_law", nu=phi.nu, sign=phi.sign,
                                sigma=phi.sigma,
                                amplitude=phi.amplitude * eps ** phi.sigma,
                                gauge=phi.gauge)
    raise ValueError(f"cannot rescale kernel of kind {phi.kind!r}")


def _sampled_symbol(phi: TwoBodyPotential, lat: Lattice) -> np.ndarray:
    """Minimum-image sampled kernel transform (non-analytic cases).

    Singular kernels get the spherical-cell-average stand-in Phi(h/2) at the
    origin; their zero mode is neutralized, matching the d=3 convention.
    """
    r = lat.wrapped_radius()
    r0 = np.roll(r, shift=(-(lat.n // 2),) * lat.d, axis=tuple(range(lat.d)))
    safe = np.where(r0 > 0, r0, 1.0)
    ker = phi.free_profile(safe)
    if phi.kind in ("power_law", "yukawa"):
        ker.flat[0] = phi.free_profile(lat.h / 2.0)
    else:
        ker.flat[0] = phi.sign * phi.amplitude  # gaussian: Phi(0)
    sym = lat.volume_element * sfft.fftn(ker).real
    if phi.kind == "power_law":
        sym.flat[0] = 0.0
    return sym


def periodization_offset(phi: TwoBodyPotential, lat: Lattice) -> float:
    """Constant offset of the neutralized lattice kernel against free space.

    Nonzero only for homogeneous (power-law) kernels; composite kernels sum
    their parts.  With offset Dbar, a state of charge N carries the additive
    energy (nu/4) Dbar N^2 and its multiplier reads -nu Dbar N below the
    free-space value; diagnostics that compare against free-space identities
    subtract these.  Under the matched gauge the kernel itself absorbs the
    offset and this correction is zero.
    """
    if phi.kind == "composite":
        return (periodization_offset(phi.short, lat)
                + periodization_offset(_rescale_kernel(phi.long, phi.eps), lat))
    if phi.kind != "power_law" or lat.d != 3 or phi.gauge == "matched":
        return 0.0
    key = (lat.d, lat.n, lat.half_width)
    if key not in phi.gauge_offset:
        kernel_symbol(phi, lat)
    return phi.gauge_offset[key]


def mean_field_potential(phi: TwoBodyPotential, plan, psi: Field) -> Field:
    """nu * (Phi * |psi|^2), the self-consistent potential felt by psi."""
    from . import grid

    lat = psi.lattice
    rho = Field(lat, (np.abs(psi.values) ** 2).astype(complex))
    sym = kernel_symbol(phi, lat)
    out = grid.convolve(plan, sym, rho)
    out.values *= phi.nu
    return out
