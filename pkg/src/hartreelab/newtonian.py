"""Point-particle limit experiments: multi-soliton initial data, windowed
center tracking, the reduced Newton dynamics, and the harmonic-trap exact
orbit.

Scales: a soliton family Q_{N_j} of the short-range kernel has diameter
L_sol = max_j sqrt(1/omega_j); the slow external profile W(eps x) has scale
L_ext = 1/(eps sup|grad W|).  Setup enforces eps >= L_sol / min separation
and L_sol/L_ext < 0.1.  With boson mass m = 1/2 and boost phase v.x/2 the
soliton group velocity equals v, so the tracked centers are compared against

    m qdd_j = -eps lam (grad W)(eps q_j)
              - eps nu sum_{i != j} N_i (grad Phi_l)(eps (q_j - q_i)),

integrated by classic fixed-step fourth-order Runge-Kutta (radiation damping
is o(eps) in the underlying expansion and is not modeled; it is folded into
the reported deviation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import grid
from .grid import Field, Lattice
from .observables import charge, momentum
from .potentials import ExternalPotential, TwoBodyPotential
from .propagator import PropagatorConfig, TrajectoryLog, boost, evolve

__all__ = [
    "SolitonBody",
    "NewtonConfig",
    "SeparationError",
    "build_initial",
    "CenterTracker",
    "track_centers",
    "newton_ode",
    "compare",
    "harmonic_orbit_test",
    "bound_pair_energy",
]

MASS = 0.5  # boson mass in the units of the one-particle dynamics


class SeparationError(ValueError):
    """Initial soliton placement violates the scale separation requirements."""


@dataclass
class SolitonBody:
    N: float
    q: np.ndarray
    v: np.ndarray
    gamma: float = 0.0

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        self.v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if self.N <= 0:
            raise ValueError("body charge must be positive")


@dataclass
class NewtonConfig:
    eps: float
    bodies: list
    phi: TwoBodyPotential                  # composite short + long(eps .)
    external: Optional[ExternalPotential] = None   # W profile; PDE sees W(eps x)
    horizon: Optional[float] = None        # default 1/eps
    window_radius_factor: float = 4.0
    scale_ratio_max: float = 0.1

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.phi.kind != "composite":
            raise ValueError("newtonian runs need a composite short+long kernel")
        if abs(self.phi.eps - self.eps) > 1e-12:
            raise ValueError("kernel eps and config eps must agree")
        if self.horizon is None:
            self.horizon = 1.0 / self.eps

    @property
    def phi_short(self) -> TwoBodyPotential:
        return self.phi.short

    @property
    def phi_long(self) -> TwoBodyPotential:
        return self.phi.long


def soliton_diameter(groundstates: dict) -> float:
    """L_sol = max_j sqrt(1/omega_j) over the participating ground states."""
    return max(np.sqrt(1.0 / gs.omega) for gs in groundstates.values())


def _check_scales(cfg: NewtonConfig, L_sol: float) -> None:
    qs = [b.q for b in cfg.bodies]
    if len(qs) > 1:
        min_sep = min(np.linalg.norm(qi - qj)
                      for i, qi in enumerate(qs) for qj in qs[:i])
        if cfg.eps < L_sol / min_sep - 1e-12:
            raise SeparationError(
                f"separation {min_sep:.3g} too small: need eps >= L_sol/sep "
                f"= {L_sol / min_sep:.3g}, got eps = {cfg.eps:.3g}")
    if cfg.external is not None and cfg.external.lam != 0.0:
        # L_ext = 1/(eps sup|grad W|), estimated over the occupied region
        pts = np.stack([b.q for b in cfg.bodies])
        gw = np.linalg.norm(cfg.external.lam
                            * cfg.external.gradient_profile(cfg.eps * pts), axis=1)
        sup = max(float(gw.max()), 1e-300)
        ratio = L_sol * cfg.eps * sup
        if ratio > cfg.scale_ratio_max:
            raise SeparationError(
                f"L_sol/L_ext = {ratio:.3g} exceeds {cfg.scale_ratio_max}")


def build_initial(cfg: NewtonConfig, groundstates: dict,
                  charge_tol: float = 1e-8) -> Field:
    """Superpose boosted ground states Q_{N_j}(x - q_j) e^{i(v_j.(x-q_j)/2 + gamma_j)}.

    ``groundstates`` maps each body charge to a GroundState solved for the
    short-range kernel alone (lam = 0, long part off).  The total charge must
    come out as sum N_j within charge_tol relative, which enforces negligible
    overlap.
    """
    L_sol = soliton_diameter(groundstates)
    _check_scales(cfg, L_sol)
    lat = None
    total = None
    for b in cfg.bodies:
        if b.N not in groundstates:
            raise KeyError(f"missing ground state for charge {b.N}")
        gs = groundstates[b.N]
        lat = gs.Q.lattice if lat is None else lat
        if gs.Q.lattice != lat:
            raise grid.LatticeMismatchError("ground states on mixed lattices")
        piece = boost(gs.Q, b.v, dshift=b.q, gamma=b.gamma)
        total = piece if total is None else Field(lat, total.values + piece.values)
    want = sum(b.N for b in cfg.bodies)
    got = charge(total)
    if abs(got - want) > charge_tol * want:
        raise SeparationError(
            f"overlap error: total charge {got:.12g} vs sum of bodies {want:.12g}")
    return total


class CenterTracker:
    """Windowed-centroid tracker; follows each body with a ball window of
    radius window_radius_factor * L_sol advected from the previous frame.

    Tracked positions are reported unwrapped (continuous across the periodic
    boundary).  Windowed mass drift stands in for the |dN_j/dt| = o(eps)
    bound; window collisions set the ``ambiguous`` flag.
    """

    def __init__(self, cfg: NewtonConfig, lat: Lattice, L_sol: float):
        self.cfg = cfg
        self.lat = lat
        self.radius = cfg.window_radius_factor * L_sol
        self.coords = lat.coords()
        self.times = []
        self.positions = []     # list of (k, d) arrays
        self.masses = []
        self.ambiguous = False
        self._centers = np.stack([b.q for b in cfg.bodies]).astype(float)
        self._velocities = np.stack([b.v for b in cfg.bodies]).astype(float)
        self._t_prev = None

    def _window_centroid(self, rho, center):
        L = 2.0 * self.lat.half_width
        # minimum-image displacement from the window center
        delta = [(x - c + self.lat.half_width) % L - self.lat.half_width
                 for x, c in zip(self.coords, center)]
        r2 = sum(d ** 2 for d in delta)
        w = r2 <= self.radius ** 2
        m = rho[w].sum() * self.lat.volume_element
        if m <= 0:
            return center, 0.0
        off = np.array([(d[w] * rho[w]).sum() * self.lat.volume_element / m
                        for d in delta])
        return center + off, m

    def update(self, t: float, psi: Field) -> None:
        rho = np.abs(psi.values) ** 2
        dt = 0.0 if self._t_prev is None else t - self._t_prev
        preds = self._centers + self._velocities * dt
        if len(preds) > 1:
            min_sep = min(np.linalg.norm(pi - pj)
                          for i, pi in enumerate(preds) for pj in preds[:i])
            if min_sep < 2.0 * self.radius:
                self.ambiguous = True
        new_centers = np.empty_like(preds)
        masses = np.empty(len(preds))
        for j, c in enumerate(preds):
            cj, mj = self._window_centroid(rho, c)
            cj, mj = self._window_centroid(rho, cj)   # one recentering pass
            new_centers[j] = cj
            masses[j] = mj
        if self._t_prev is not None and dt > 0:
            self._velocities = (new_centers - self._centers) / dt
        self._centers = new_centers
        self._t_prev = t
        self.times.append(t)
        self.positions.append(new_centers.copy())
        self.masses.append(masses)

    def trajectory(self):
        return (np.array(self.times), np.stack(self.positions),
                np.stack(self.masses))


def track_centers(log: TrajectoryLog, cfg: NewtonConfig, L_sol: float):
    """Run the tracker over the stored snapshots of a finished trajectory."""
    if not log.snapshots:
        raise ValueError("trajectory log carries no snapshots")
    lat = log.snapshots[0][1].lattice
    tracker = CenterTracker(cfg, lat, L_sol)
    for t, f in log.snapshots:
        tracker.update(t, f)
    return tracker


def _forces(cfg: NewtonConfig, qs: np.ndarray) -> np.ndarray:
    """Right side of Newton's equations divided by m, shape (k, d)."""
    k = qs.shape[0]
    acc = np.zeros_like(qs)
    if cfg.external is not None and cfg.external.lam != 0.0:
        acc -= (cfg.eps * cfg.external.lam
                * cfg.external.gradient_profile(cfg.eps * qs))
    nu = cfg.phi.nu
    if nu != 0.0:
        for j in range(k):
            for i in range(k):
                if i == j:
                    continue
                g = cfg.phi_long.pair_gradient((cfg.eps * (qs[j] - qs[i]))[None, :])
                acc[j] -= cfg.eps * nu * cfg.bodies[i].N * g[0]
    return acc / MASS


def reduced_energy(cfg: NewtonConfig, qs, vs) -> float:
    E = sum(0.5 * MASS * b.N * float(v @ v) for b, v in zip(cfg.bodies, vs))
    if cfg.external is not None and cfg.external.lam != 0.0:
        for b, q in zip(cfg.bodies, qs):
            E += b.N * cfg.external.lam * float(
                cfg.external.profile(list(cfg.eps * q)))
    nu = cfg.phi.nu
    if nu != 0.0:
        for j in range(len(cfg.bodies)):
            for i in range(j):
                r = np.linalg.norm(qs[j] - qs[i])
                E += (nu * cfg.bodies[i].N * cfg.bodies[j].N
                      * float(cfg.phi_long.free_profile(cfg.eps * r)))
    return E


def newton_ode(cfg: NewtonConfig, times, dt: float = 1e-3) -> dict:
    """Reference trajectories on the requested time grid (fixed-step RK4).

    Returns positions (len(times), k, d), velocities, and the worst relative
    drift of the reduced energy over the horizon.
    """
    times = np.asarray(times, dtype=float)
    qs = np.stack([b.q for b in cfg.bodies]).astype(float)
    vs = np.stack([b.v for b in cfg.bodies]).astype(float)
    E0 = reduced_energy(cfg, qs, vs)
    out_q = [qs.copy()]
    out_v = [vs.copy()]
    e_drift = 0.0
    t = times[0]
    for t_next in times[1:]:
        span = t_next - t
        n_sub = max(1, int(np.ceil(span / dt)))
        h = span / n_sub
        for _ in range(n_sub):
            k1q, k1v = vs, _forces(cfg, qs)
            k2q, k2v = vs + 0.5 * h * k1v, _forces(cfg, qs + 0.5 * h * k1q)
            k3q, k3v = vs + 0.5 * h * k2v, _forces(cfg, qs + 0.5 * h * k2q)
            k4q, k4v = vs + h * k3v, _forces(cfg, qs + h * k3q)
            qs = qs + (h / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
            vs = vs + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        t = t_next
        out_q.append(qs.copy())
        out_v.append(vs.copy())
        if E0 != 0:
            e_drift = max(e_drift, abs(reduced_energy(cfg, qs, vs) - E0) / abs(E0))
    return {"t": times, "q": np.stack(out_q), "v": np.stack(out_v),
            "energy_drift": e_drift}


def compare(times, tracked_q, reference_q) -> dict:
    """Sup over the common time grid of the worst per-body deviation."""
    tracked_q = np.asarray(tracked_q)
    reference_q = np.asarray(reference_q)
    if tracked_q.shape != reference_q.shape:
        raise ValueError("trajectory shapes differ; align the time grids first")
    dev = np.linalg.norm(tracked_q - reference_q, axis=2).max(axis=1)
    return {"t": np.asarray(times), "deviation": dev,
            "sup": float(dev.max()), "final": float(dev[-1])}


def bound_pair_energy(cfg: NewtonConfig) -> float:
    """Binding indicator N1 v1^2 + N2 v2^2 + nu N1 N2 Phi_l(eps(q1-q2));
    negative values mark a bound two-soliton configuration."""
    if len(cfg.bodies) != 2:
        raise ValueError("binding indicator is defined for two bodies")
    b1, b2 = cfg.bodies
    r = np.linalg.norm(b1.q - b2.q)
    return (b1.N * float(b1.v @ b1.v) + b2.N * float(b2.v @ b2.v)
            + cfg.phi.nu * b1.N * b2.N
            * float(cfg.phi_long.free_profile(cfg.eps * r)))


def harmonic_orbit_test(gs, V: ExternalPotential, phi: TwoBodyPotential,
                        x0, p0, n_periods: float = 1.0, dt: float = 1e-3,
                        record_every: int = 20) -> dict:
    """Soliton transported along the classical isotropic-oscillator orbit.

    With the trap |x|^2 (lam = 1) the center obeys xdot = 2 p, pdot = -2 x,
    i.e. x_c(t) = x0 cos 2t + p0 sin 2t with period pi, and p^2 + x^2 is
    conserved.  The initial datum is boost(Q, v = 2 p0, shift = x0); centers
    are read from the records as centroid/N and momentum/N.
    """
    if V.kind != "harmonic" or abs(V.lam - 1.0) > 1e-12:
        raise ValueError("exact orbit test requires the unit harmonic trap")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    T = n_periods * np.pi
    psi0 = boost(gs.Q, 2.0 * p0, dshift=x0, gamma=0.0)
    cfg = PropagatorConfig(dt=dt, t_end=T, record_every=record_every)
    log = evolve(psi0, V, phi, cfg)
    ts = log.times()
    N = log.records[0].charge
    xs = np.stack([np.atleast_1d(r.centroid) / N for r in log.records])
    ps = np.stack([np.atleast_1d(r.momentum) / N for r in log.records])
    x_ref = (np.cos(2 * ts)[:, None] * x0[None, :]
             + np.sin(2 * ts)[:, None] * p0[None, :])
    dev = np.linalg.norm(xs - x_ref, axis=1)
    E_cl = (ps ** 2).sum(axis=1) + (xs ** 2).sum(axis=1)
    return {
        "t": ts, "x": xs, "p": ps, "x_ref": x_ref,
        "sup_deviation": float(dev.max()),
        "orbit_energy": E_cl,
        "orbit_energy_drift": float(np.max(np.abs(E_cl - E_cl[0]))),
        "log": log,
    }
