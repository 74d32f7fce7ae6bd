"""Real-linear operator governing perturbations around a soliton.

Writing psi = e^{i omega t} (Q + h) and keeping first order in h gives
i dh/dt = L h with

    L h = -Lap h + omega h + nu (Phi * Q^2) h + nu Q (Phi * (Q (h + conj h))).

L is real-linear, not complex-linear: on the pair (Re h, Im h) it acts block
diagonally as L_plus (+) L_minus with

    L_plus  = -Lap + omega + nu Phi*Q^2 + 2 nu Q Phi*(Q .)
    L_minus = -Lap + omega + nu Phi*Q^2,

both real symmetric, so the block operator is symmetric with respect to the
plain real inner product Re <g, h>_{L^2}.  Gauge and translation symmetry
force L(iQ) = 0 and L(dQ/dx_j) = 0, a (d+1)-dimensional kernel split as
Q in the L_minus block and the gradient directions in L_plus.  (Time
evolution itself is generated by J L with the standard symplectic block J.)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import grid
from .grid import Field, Lattice, LatticeMismatchError
from .potentials import ExternalPotential, TwoBodyPotential, kernel_symbol, sample_V

__all__ = ["LinearizedOperator", "apply", "null_residuals", "low_spectrum"]


@dataclass
class LinearizedOperator:
    Q: Field                      # real soliton profile
    omega: float
    phi: TwoBodyPotential
    external: Optional[ExternalPotential] = None
    _Qr: np.ndarray = field(init=False, repr=False)
    _WQ: np.ndarray = field(init=False, repr=False)
    _sym_r: Optional[np.ndarray] = field(init=False, repr=False)
    _k2r: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lat = self.lattice
        self._Qr = self.Q.values.real.copy()
        self._k2r = np.ascontiguousarray(lat.k_squared()[..., : lat.n // 2 + 1])
        if self.phi.nu != 0.0:
            sym = kernel_symbol(self.phi, lat)
            self._sym_r = np.ascontiguousarray(sym[..., : lat.n // 2 + 1])
            self._WQ = self.phi.nu * grid.convolve_real(self._sym_r, self._Qr ** 2)
        else:
            self._sym_r = None
            self._WQ = np.zeros(lat.shape)
        if self.external is not None and self.external.lam != 0.0:
            self._WQ = self._WQ + sample_V(self.external, lat).values.real

    @property
    def lattice(self) -> Lattice:
        return self.Q.lattice

    def _lap(self, v):
        return grid._irfftn(self._k2r * grid._rfftn(v), v.shape)

    def _a_apply(self, v):
        """L_minus = -Lap + omega + nu Phi*Q^2 (+ lam V), on real arrays."""
        return self._lap(v) + (self.omega + self._WQ) * v

    def _b_apply(self, v):
        """B v = nu Q (Phi * (Q v)), on real arrays."""
        if self._sym_r is None:
            return np.zeros_like(v)
        return self.phi.nu * self._Qr * grid.convolve_real(self._sym_r, self._Qr * v)


def apply(L: LinearizedOperator, h: Field) -> Field:
    """L h for complex h; real-linear (apply(i h) != i apply(h) in general)."""
    if h.lattice != L.lattice:
        raise LatticeMismatchError("perturbation lives on a different lattice")
    u = np.ascontiguousarray(h.values.real)
    v = np.ascontiguousarray(h.values.imag)
    out = L._a_apply(u) + 2.0 * L._b_apply(u) + 1j * L._a_apply(v)
    return Field(L.lattice, out)


def null_residuals(L: LinearizedOperator) -> np.ndarray:
    """Relative residuals ||L z|| / ||z|| for the d+1 symmetry directions
    z = iQ and z = dQ/dx_j."""
    lat = L.lattice
    Q = L.Q
    out = []
    iQ = Field(lat, 1j * Q.values)
    out.append(_rel_residual(L, iQ))
    for g in grid.gradient(Q):
        out.append(_rel_residual(L, Field(lat, g.values.real.astype(complex))))
    return np.array(out)


def _rel_residual(L: LinearizedOperator, z: Field) -> float:
    num = np.linalg.norm(apply(L, z).values.ravel())
    den = np.linalg.norm(z.values.ravel())
    return float(num / den) if den > 0 else np.inf


def low_spectrum(L: LinearizedOperator, count: int = 8,
                 tol: float = 1e-10) -> np.ndarray:
    """Smallest-magnitude eigenvalues of the block representation on
    (Re h, Im h), found by matrix-free Lanczos (no shift-invert) on the two
    symmetric blocks; includes the (d+1)-fold numerical kernel.
    """
    if count > 20:
        raise ValueError("count must be <= 20")
    lat = L.lattice
    size = lat.size
    shape = lat.shape
    k_each = min(count + 2, size - 2)
    # kernel modes cluster against tail-bound states of the mean-field
    # potential; a roomy subspace keeps Lanczos from skipping them
    ncv = min(size, max(6 * k_each, 60))

    def make_op(with_b):
        def mv(x):
            v = x.reshape(shape)
            out = L._a_apply(v)
            if with_b:
                out = out + 2.0 * L._b_apply(v)
            return out.ravel()
        return spla.LinearOperator((size, size), matvec=mv, dtype=float)

    rng = np.random.default_rng(7)
    v0 = rng.standard_normal(size)
    evals = []
    for with_b in (True, False):
        vals = spla.eigsh(make_op(with_b), k=k_each, which="SA", v0=v0,
                          ncv=ncv, tol=tol, maxiter=size * 40,
                          return_eigenvectors=False)
        evals.extend(vals.tolist())
    evals = np.array(sorted(evals, key=abs)[:count])
    return evals
