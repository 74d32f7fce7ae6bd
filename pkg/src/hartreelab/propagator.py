"""Strang-split spectral time stepping for the Hartree equation

    i dpsi/dt = T psi + lam V psi + nu (Phi * |psi|^2) psi,

with T = -Laplacian or the semi-relativistic dispersion.  One step is

    exp(-i T dt/2) . exp(-i (lam V + nu Phi*rho) dt) . exp(-i T dt/2);

the potential substep is exact because a real local phase leaves |psi|
(and hence Phi*rho) unchanged.  Consecutive kinetic half-steps are fused
except where the state is sampled, so a step costs one complex transform
pair plus one real pair for the convolution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import grid
from .grid import Field
from .observables import InvariantRecord, record_invariants
from .potentials import (ExternalPotential, KineticKind, TwoBodyPotential,
                         kernel_symbol, kinetic_symbol, sample_V)

__all__ = ["PropagatorConfig", "TrajectoryLog", "step", "evolve", "boost"]


@dataclass
class PropagatorConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    record_every: int = 100
    snapshot_every: int = 0           # 0 disables stored snapshots
    kinetic: KineticKind = field(default_factory=KineticKind)
    blowup_gradnorm_factor: float = 1e3
    dt_floor: float = 1e-7
    energy_jump_factor: float = 10.0  # adaptive halving trigger
    adaptive: bool = False
    growth_for_blowup: float = 3.0    # gradient growth required with dt-floor verdict

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.blowup_gradnorm_factor <= 1 or self.energy_jump_factor <= 1:
            raise ValueError("thresholds must exceed 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class TrajectoryLog:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)   # (t, Field) pairs
    outcome: str = "completed"                      # completed | blowup_detected | aborted
    t_event: Optional[float] = None
    lam: float = 0.0
    boundary_warning: bool = False
    wall_time: float = 0.0

    def append(self, rec: InvariantRecord) -> None:
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError("records must be strictly increasing in t")
        if not self.records and rec.t != 0.0:
            raise ValueError("first record must be at t=0")
        self.records.append(rec)
        self.boundary_warning = self.boundary_warning or rec.boundary_warn

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


class _Workspace:
    """Precomputed arrays for one (lattice, potentials, kinetic) combination."""

    def __init__(self, lat, V, phi, kinetic):
        self.lat = lat
        self.tsym = kinetic_symbol(kinetic, lat)
        self.Vs = sample_V(V, lat).values.real if V.lam != 0.0 else None
        if phi.nu != 0.0:
            sym = kernel_symbol(phi, lat)
            self.sym_r = np.ascontiguousarray(sym[..., : lat.n // 2 + 1])
        else:
            self.sym_r = None
        self.nu = phi.nu

    def potential(self, rho):
        W = None
        if self.sym_r is not None:
            W = self.nu * grid.convolve_real(self.sym_r, rho)
            if self.Vs is not None:
                W += self.Vs
        elif self.Vs is not None:
            W = self.Vs.copy()
        return W


def step(psi: Field, V: ExternalPotential, phi: TwoBodyPotential, dt: float,
         kinetic: KineticKind = KineticKind()) -> Field:
    """One Strang step; NaN appearance raises FloatingPointError."""
    ws = _Workspace(psi.lattice, V, phi, kinetic)
    kin_half = np.exp(-0.5j * dt * ws.tsym)
    vals = grid._ifftn(kin_half * grid._fftn(psi.values))
    rho = vals.real ** 2 + vals.imag ** 2
    W = ws.potential(rho)
    if W is not None:
        vals = vals * np.exp(-1j * dt * W)
    vals = grid._ifftn(kin_half * grid._fftn(vals))
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("NaN appeared during time step")
    return Field(psi.lattice, vals)


def evolve(psi0: Field, V: ExternalPotential, phi: TwoBodyPotential,
           cfg: PropagatorConfig,
           observer: Optional[Callable[[float, Field], None]] = None) -> TrajectoryLog:
    """Propagate psi0 to cfg.t_end, logging invariants every record_every steps.

    Terminates early with outcome ``blowup_detected`` when the gradient norm
    exceeds blowup_gradnorm_factor times its initial value, or (adaptive mode)
    when dt halving hits dt_floor while the gradient norm has grown by
    growth_for_blowup.  ``observer`` is called at every record time with the
    current field, letting callers track without storing snapshots.
    """
    t_start = time.time()
    lat = psi0.lattice
    from .observables import charge as _charge

    if _charge(psi0) <= 0.0:
        raise ValueError("initial datum must carry positive charge")
    ws = _Workspace(lat, V, phi, cfg.kinetic)
    log = TrajectoryLog(lam=V.lam)

    dt = cfg.dt
    kin_half = np.exp(-0.5j * dt * ws.tsym)

    def sample(t, vals):
        f = Field(lat, vals)
        rec = record_invariants(t, f, V, phi, cfg.kinetic)
        log.append(rec)
        if observer is not None:
            observer(t, f)
        if cfg.snapshot_every and (len(log.records) - 1) % cfg.snapshot_every == 0:
            log.snapshots.append((t, f.copy()))
        return rec

    rec0 = sample(0.0, psi0.values)
    grad0 = max(rec0.grad_norm, 1e-300)
    energy_jumps = []
    E_prev = rec0.energy

    vals = psi0.values.copy()
    i = 0
    t = 0.0
    in_kspace = False
    vk = None
    while t < cfg.t_end - 0.5 * dt:
        if not in_kspace:
            vk = grid._fftn(vals)
        vk *= kin_half
        vals = grid._ifftn(vk)
        rho = vals.real ** 2 + vals.imag ** 2
        W = ws.potential(rho)
        if W is not None:
            vals *= np.exp(-1j * dt * W)
        vk = grid._fftn(vals)
        vk *= kin_half
        i += 1
        t += dt
        at_record = (i % cfg.record_every == 0) or (t >= cfg.t_end - 0.5 * dt)
        if not at_record:
            in_kspace = True   # fuse the next kinetic half step
            continue
        vals = grid._ifftn(vk)
        in_kspace = False
        if not np.all(np.isfinite(vals)):
            log.outcome, log.t_event = "aborted", t
            break
        rec = sample(t, vals)
        if rec.grad_norm > cfg.blowup_gradnorm_factor * grad0:
            log.outcome, log.t_event = "blowup_detected", t
            break
        if cfg.adaptive:
            jump = abs(rec.energy - E_prev)
            med = np.median(energy_jumps) if energy_jumps else jump
            energy_jumps.append(jump)
            E_prev = rec.energy
            if med > 0 and jump > cfg.energy_jump_factor * med:
                dt *= 0.5
                kin_half = np.exp(-0.5j * dt * ws.tsym)
                if dt <= cfg.dt_floor:
                    if rec.grad_norm > cfg.growth_for_blowup * grad0:
                        log.outcome, log.t_event = "blowup_detected", t
                    else:
                        log.outcome, log.t_event = "aborted", t
                    break
    log.wall_time = time.time() - t_start
    return log


def boost(psi: Field, v, dshift=None, gamma: float = 0.0) -> Field:
    """Galilei boost: e^{i(v.(x-d)/2 + gamma)} psi(x - d).

    The translation is applied spectrally, so d need not sit on the lattice;
    charge is preserved exactly.  With boson mass m = 1/2 the boosted soliton
    travels at velocity v and its momentum gains (v/2) N.
    """
    lat = psi.lattice
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size != lat.d:
        raise ValueError("boost velocity must have one component per dimension")
    if dshift is None:
        dshift = np.zeros(lat.d)
    dshift = np.atleast_1d(np.asarray(dshift, dtype=float))
    out = grid.spectral_shift(psi, dshift) if np.any(dshift != 0) else psi.copy()
    X = lat.coords()
    phase = gamma + 0.5 * sum(vj * (x - dj) for vj, x, dj in zip(v, X, dshift))
    out.values *= np.exp(1j * phase)
    return out
