"""Subcommand drivers: wire configs to the physics modules, write CSVs,
snapshots, figures, and a checksummed run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, grid, observables, plots
from .config import ExperimentConfig, config_hash, serialize
from .grid import Field, Lattice, read_snapshot, write_snapshot
from .ground_state import (GroundState, check_subadditivity, critical_point,
                           dual_slope_check, energy_curve, minimize,
                           scaling_exponent, symmetry_check, virial_check)
from .linearization import LinearizedOperator, low_spectrum, null_residuals
from .many_body import (conjecture_probe, ground_energy_scaling,
                        mean_field_deviation)
from .newtonian import (CenterTracker, NewtonConfig, SolitonBody,
                        build_initial, compare, harmonic_orbit_test,
                        newton_ode, soliton_diameter)
from .observables import manifold_distance, write_records_csv
from .potentials import ExternalPotential, TwoBodyPotential
from .propagator import PropagatorConfig, boost, evolve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_EVENT = 10  # completed with a detected event (blow-up)

_FMT = ".17g"


def _fmt(x) -> str:
    return format(float(x), _FMT)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float, np.floating))
                        else str(v) for v in row])


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_outdir(cfg: ExperimentConfig, out_flag=None) -> Path:
    if out_flag:
        root = Path(out_flag)
    elif cfg.data.get("output"):
        root = Path(cfg.data["output"])
    else:
        env = os.environ.get("HARTREELAB_OUT")
        base = Path(env) if env else Path("hartreelab_out")
        root = base / cfg.subcommand
    root.mkdir(parents=True, exist_ok=True)
    return root


def write_manifest(outdir: Path, cfg: ExperimentConfig, outcome: str,
                   wall: float, summary: dict) -> Path:
    import scipy

    files = {}
    for p in sorted(outdir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        files[p.name] = _sha256(p)
    manifest = {
        "subcommand": cfg.subcommand,
        "config_sha256": config_hash(cfg),
        "package_version": __version__,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "outcome": outcome,
        "wall_time_s": wall,
        "summary": summary,
        "files": files,
        "config": cfg.data,
    }
    path = outdir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return path


def _prop_config(cfg: ExperimentConfig, **overrides) -> PropagatorConfig:
    run = cfg.block("run")
    kw = dict(
        dt=float(run["dt"]), t_end=float(run["t_end"]),
        record_every=int(run["record_every"]),
        snapshot_every=int(run["snapshot_every"]),
        kinetic=cfg.kinetic(),
        blowup_gradnorm_factor=float(run["blowup_gradnorm_factor"]),
        dt_floor=float(run["dt_floor"]), adaptive=bool(run["adaptive"]),
    )
    kw.update(overrides)
    return PropagatorConfig(**kw)


def _apply_threads(cfg: ExperimentConfig, threads=None):
    run_threads = int(cfg.block("run").get("threads") or 0)
    n = threads or run_threads or (os.cpu_count() or 1)
    grid.set_fft_workers(n)


def _initial_field(cfg: ExperimentConfig, lat: Lattice) -> Field:
    blk = cfg.block("initial")
    if blk["kind"] == "snapshot":
        f = read_snapshot(blk["path"])
        if f.lattice != lat:
            raise ValueError("snapshot lattice differs from configured lattice")
        return f
    if blk["kind"] == "ground_state":
        gs = minimize(float(blk["charge"]), cfg.external(), cfg.twobody(), lat,
                      tol=float(cfg.block("run")["tol"]),
                      seed=int(cfg.block("run")["seed"]))
        psi = gs.Q
    elif blk["kind"] == "gaussian":
        r2 = sum((x - c) ** 2 for x, c in
                 zip(lat.coords(), cfg.vector("initial", "center", lat.d)))
        vals = np.exp(-r2 / (2.0 * float(blk["width"]) ** 2)).astype(complex)
        psi = Field(lat, vals)
        c = observables.charge(psi)
        psi.values *= np.sqrt(float(blk["charge"]) / c)
    else:
        raise ValueError(f"unknown initial kind {blk['kind']!r}")
    v = cfg.vector("initial", "velocity", lat.d)
    if np.any(v != 0) or blk["phase"]:
        psi = boost(psi, v, gamma=float(blk["phase"]))
    return psi


# ---------------------------------------------------------------------------
# subcommand drivers; each returns (exit_code, outcome, summary)
# ---------------------------------------------------------------------------

def run_evolve(cfg: ExperimentConfig, outdir: Path):
    lat = cfg.lattice()
    psi0 = _initial_field(cfg, lat)
    log = evolve(psi0, cfg.external(), cfg.twobody(), _prop_config(cfg))
    write_records_csv(outdir / "records.csv", log.records)
    for i, (t, f) in enumerate(log.snapshots):
        write_snapshot(outdir / f"snapshot_{i:04d}.hrtf", f)
    r0, r1 = log.records[0], log.records[-1]
    summary = {
        "charge_drift": abs(r1.charge - r0.charge) / r0.charge,
        "energy_drift": abs(r1.energy - r0.energy) / max(abs(r0.energy), 1e-300),
        "t_final": r1.t,
        "boundary_warning": log.boundary_warning,
    }
    if log.t_event is not None:
        summary["t_event"] = log.t_event
    code = EXIT_EVENT if log.outcome == "blowup_detected" else EXIT_OK
    return code, log.outcome, summary


def run_groundstate(cfg: ExperimentConfig, outdir: Path):
    lat = cfg.lattice()
    run = cfg.block("run")
    blk = cfg.block("groundstate")
    charges = [float(x) for x in blk["charges"]]
    curve = energy_curve(charges, cfg.external(), cfg.twobody(), lat,
                         tol=float(run["tol"]), seed=int(run["seed"]))
    _write_csv(outdir / "curve.csv", ["N", "E", "omega", "residual"],
               zip(curve.N, curve.E, curve.omega, curve.residual))
    gs = curve.states[-1]
    write_snapshot(outdir / "q.hrtf", gs.Q)
    lines = [f"ground states for {len(charges)} charges on "
             f"d={lat.d} n={lat.n} l={lat.half_width}"]
    summary = {"E_last": gs.E, "omega_last": gs.omega,
               "residual_max": float(curve.residual.max())}
    if len(charges) >= 4:
        slope = dual_slope_check(curve)
        lines.append(f"max |E'(N)+omega/2| / |omega/2| = {slope.rel_error.max():.3e}"
                     f" (omega increasing: {slope.omega_increasing},"
                     f" E concave: {slope.E_concave})")
        summary["slope_rel_error"] = float(slope.rel_error.max())
        sub = check_subadditivity(curve)
        lines.append(f"subadditivity worst margin = {sub.worst:.6e} "
                     f"({'strict' if sub.passed else 'VIOLATED'})")
        summary["subadditivity_worst"] = sub.worst
    sym = symmetry_check(gs)
    lines.append(f"radial deviation {sym.radial_deviation:.3e}, "
                 f"monotone={sym.monotone}, positive={sym.positive}")
    if blk.get("omegas"):
        fit = scaling_exponent(cfg.twobody(), lat,
                               [float(w) for w in blk["omegas"]])
        lines.append(f"charge-multiplier exponent fit: {fit['exponent']:.4f} "
                     f"(C = {fit['C']:.6g})")
        summary["scaling_exponent"] = fit["exponent"]
        _write_csv(outdir / "scaling.csv", ["omega", "N"],
                   zip(fit["omega"], fit["N"]))
    seeds = int(blk.get("multi_seed") or 0)
    if seeds > 1:
        states = [minimize(charges[-1], cfg.external(), cfg.twobody(), lat,
                           tol=float(run["tol"]), seed=s) for s in range(seeds)]
        dists = [manifold_distance(states[i].Q, states[0])
                 for i in range(1, seeds)]
        lines.append("multi-seed manifold distances: "
                     + ", ".join(f"{d:.3e}" for d in dists))
        summary["multi_seed_max_distance"] = max(dists)
    (outdir / "report.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK, "completed", summary


def run_linearize(cfg: ExperimentConfig, outdir: Path):
    lat = cfg.lattice()
    run = cfg.block("run")
    blk = cfg.block("linearize")
    if blk["groundstate_path"]:
        Q = read_snapshot(blk["groundstate_path"])
        from .ground_state import _Problem
        pr = _Problem(Q.lattice, cfg.external(), cfg.twobody())
        om, res, _ = pr.rayleigh(Q.values.real)
    else:
        charges = cfg.block("groundstate")["charges"]
        gs = minimize(float(charges[-1]), cfg.external(), cfg.twobody(), lat,
                      tol=float(run["tol"]), seed=int(run["seed"]))
        Q, om = gs.Q, gs.omega
    ext = cfg.external()
    L = LinearizedOperator(Q=Q, omega=om, phi=cfg.twobody(),
                           external=ext if ext.lam != 0 else None)
    res = null_residuals(L)
    names = ["iQ"] + [f"dQ_dx{j + 1}" for j in range(Q.lattice.d)]
    _write_csv(outdir / "residuals.csv", ["direction", "relative_residual"],
               zip(names, res))
    spec = low_spectrum(L, count=int(blk["count"]))
    _write_csv(outdir / "spectrum.csv", ["index", "eigenvalue"],
               enumerate(spec))
    summary = {"max_null_residual": float(res.max()),
               "n_near_zero": int(np.sum(np.abs(spec) < 1e-4))}
    return EXIT_OK, "completed", summary


def run_trapdance(cfg: ExperimentConfig, outdir: Path):
    lat = cfg.lattice()
    run = cfg.block("run")
    blk = cfg.block("trapdance")
    V = cfg.external()
    if V.kind != "harmonic":
        raise ValueError("trapdance requires potential.external.kind = harmonic")
    gs = minimize(float(cfg.block("initial")["charge"]), V, cfg.twobody(), lat,
                  tol=float(run["tol"]), seed=int(run["seed"]))
    rep = harmonic_orbit_test(gs, V, cfg.twobody(),
                              x0=cfg.vector("trapdance", "x0", lat.d),
                              p0=cfg.vector("trapdance", "p0", lat.d),
                              n_periods=float(blk["periods"]),
                              dt=float(run["dt"]),
                              record_every=int(run["record_every"]))
    header = (["t"] + [f"x{i+1}" for i in range(lat.d)]
              + [f"p{i+1}" for i in range(lat.d)]
              + [f"xref{i+1}" for i in range(lat.d)] + ["orbit_energy"])
    rows = [[t, *x, *p, *xr, e] for t, x, p, xr, e in
            zip(rep["t"], rep["x"], rep["p"], rep["x_ref"], rep["orbit_energy"])]
    _write_csv(outdir / "orbit.csv", header, rows)
    summary = {"sup_deviation": rep["sup_deviation"],
               "orbit_energy_drift": rep["orbit_energy_drift"]}
    print(f"trapdance: sup |x_c - x_ref| = {rep['sup_deviation']:.3e}, "
          f"orbit energy drift = {rep['orbit_energy_drift']:.3e}")
    return EXIT_OK, "completed", summary


def run_newtonian(cfg: ExperimentConfig, outdir: Path):
    lat = cfg.lattice()
    run = cfg.block("run")
    blk = cfg.block("newtonian")
    phi = cfg.twobody()
    if phi.kind != "composite":
        raise ValueError("newtonian requires a composite twobody kernel")
    bodies = [SolitonBody(N=float(b["charge"]),
                          q=np.asarray(b["position"], dtype=float),
                          v=np.asarray(b.get("velocity") or [0.0] * lat.d,
                                       dtype=float),
                          gamma=float(b.get("phase") or 0.0))
              for b in blk["bodies"]]
    ext = cfg.external()
    ncfg = NewtonConfig(eps=float(blk["eps"]), bodies=bodies, phi=phi,
                        external=ext if ext.lam != 0 else None,
                        horizon=float(run["t_end"]),
                        window_radius_factor=float(blk["window_radius_factor"]))
    # ground states of the short-range kernel alone, lam = 0
    short = phi.short
    short_full = TwoBodyPotential(
        kind=short.kind, nu=phi.nu, sign=short.sign, sigma=short.sigma,
        mu=short.mu, width=short.width, amplitude=short.amplitude,
        gauge=short.gauge)
    free = ExternalPotential(kind="zero", lam=0.0)
    gss = {}
    for b in bodies:
        if b.N not in gss:
            gss[b.N] = minimize(b.N, free, short_full, lat,
                                tol=float(run["tol"]), seed=int(run["seed"]))
    L_sol = soliton_diameter(gss)
    psi0 = build_initial(ncfg, gss)
    tracker = CenterTracker(ncfg, lat, L_sol)
    pcfg = _prop_config(cfg)
    log = evolve(psi0, cfg.external(), phi, pcfg, observer=tracker.update)
    ts, qs, ms = tracker.trajectory()
    ode = newton_ode(ncfg, ts, dt=float(blk["ode_dt"]))
    cmp_rep = compare(ts, qs, ode["q"])
    k = len(bodies)
    body_cols = [f"q{j+1}_{ax+1}" for j in range(k) for ax in range(lat.d)]
    _write_csv(outdir / "tracked.csv",
               ["t"] + body_cols + [f"mass{j+1}" for j in range(k)],
               [[t, *q.ravel(), *m] for t, q, m in zip(ts, qs, ms)])
    _write_csv(outdir / "reference.csv", ["t"] + body_cols,
               [[t, *q.ravel()] for t, q in zip(ode["t"], ode["q"])])
    _write_csv(outdir / "deviation.csv", ["t", "deviation"],
               zip(cmp_rep["t"], cmp_rep["deviation"]))
    mass_drift = float(np.max(np.abs(ms - ms[0]), initial=0.0))
    summary = {
        "sup_deviation": cmp_rep["sup"], "final_deviation": cmp_rep["final"],
        "ode_energy_drift": ode["energy_drift"],
        "tracking_ambiguous": tracker.ambiguous,
        "mass_drift": mass_drift, "L_sol": L_sol,
        "outcome_pde": log.outcome,
    }
    print(f"newtonian: sup deviation {cmp_rep['sup']:.4e} over T={ts[-1]:.3g} "
          f"(mass drift {mass_drift:.2e})")
    return EXIT_OK, log.outcome, summary


def run_manybody(cfg: ExperimentConfig, outdir: Path):
    blk = cfg.block("manybody")
    lat = Lattice(1, int(blk["sites"]), float(cfg.block("lattice")["half_width"]))
    V, phi = cfg.external(), cfg.twobody()
    nu = phi.nu
    x = lat.axis_coords()
    phi0 = np.exp(-x ** 2 / (2.0 * float(blk["initial_width"]) ** 2)).astype(complex)
    phi0 /= np.linalg.norm(phi0)
    numbers = [int(n) for n in blk["numbers"]]
    dev = mean_field_deviation(lat, V, phi, nu, phi0, float(blk["time"]), numbers)
    _write_csv(outdir / "deviation.csv",
               ["N", "trace_distance", "condensate_fraction"],
               zip(dev["N"], dev["delta"], dev["condensate_fraction"]))
    scal = ground_energy_scaling(lat, V, phi, nu, numbers)
    _write_csv(outdir / "energies.csv", ["N", "E0_per_N", "gap_to_e0"],
               zip(scal["N"], scal["E0_per_N"], scal["gap"]))
    summary = {
        "delta_decreasing": bool(np.all(np.diff(dev["delta"]) < 0)),
        "gap_decreasing": bool(np.all(np.diff(scal["gap"]) < 0)),
        "e0": scal["e0"],
    }
    probe_n = int(blk.get("probe_number") or 0)
    if probe_n:
        probe = conjecture_probe(lat, V, phi, nu, probe_n)
        _write_csv(outdir / "conjecture.csv",
                   ["exact", "predicted", "gap", "j"],
                   [[r["exact"], r["predicted"], r["gap"], r["j"]]
                    for r in probe["rows"]])
        summary["probe_levels"] = len(probe["rows"])
    print(f"manybody: delta_N = "
          + ", ".join(f"{d:.4e}" for d in dev["delta"])
          + f"; |E0/N - e0| = "
          + ", ".join(f"{g:.4e}" for g in scal["gap"]))
    return EXIT_OK, "completed", summary


def run_stability(cfg: ExperimentConfig, outdir: Path):
    lat = cfg.lattice()
    run = cfg.block("run")
    blk = cfg.block("stability")
    V, phi = cfg.external(), cfg.twobody()
    gs = minimize(float(blk["charge"]), V, phi, lat,
                  tol=float(run["tol"]), seed=int(run["seed"]))
    rng = np.random.default_rng(int(blk["perturbation_seed"]))
    bump = rng.standard_normal(lat.shape) + 1j * rng.standard_normal(lat.shape)
    k2r = lat.k_squared()[..., : lat.n // 2 + 1]
    sm = np.exp(-lat.k_squared())
    bump = grid._ifftn(sm * grid._fftn(bump))
    bump_f = Field(lat, bump)
    delta = float(blk["delta"])
    bump_f.values *= delta / observables.h1_norm(bump_f)
    psi0 = Field(lat, gs.Q.values + bump_f.values)

    distances = []
    def observer(t, f):
        distances.append((t, manifold_distance(f, gs)))

    pcfg = _prop_config(cfg, t_end=float(blk["horizon"]))
    log = evolve(psi0, V, phi, pcfg, observer=observer)
    _write_csv(outdir / "distance.csv", ["t", "manifold_distance"], distances)
    sup_d = max(d for _, d in distances)
    summary = {"delta": delta, "sup_distance": sup_d, "outcome": log.outcome}

    bv = blk.get("boost_velocity")
    if bv:
        v = np.asarray([float(x) for x in bv])
        crossing = 2.0 * lat.half_width / max(np.linalg.norm(v), 1e-300)
        bdist = []
        def observer_b(t, f):
            chi = boost(f, -v)
            bdist.append((t, manifold_distance(chi, gs)))
        pcfg_b = _prop_config(cfg, t_end=crossing)
        evolve(boost(gs.Q, v), V, phi, pcfg_b, observer=observer_b)
        _write_csv(outdir / "boosted_distance.csv",
                   ["t", "manifold_distance"], bdist)
        summary["boosted_sup_distance"] = max(d for _, d in bdist)
    print(f"stability: sup_t d(psi(t)) = {sup_d:.4e} for delta = {delta:g}")
    return EXIT_OK, "completed", summary


def run_blowup(cfg: ExperimentConfig, outdir: Path):
    lat = cfg.lattice()
    blk = cfg.block("blowup")
    phi = cfg.twobody()
    if not (phi.kind == "power_law" and abs(phi.sigma - 2.0) < 1e-12):
        raise ValueError("blowup experiment is the sigma = 2 critical study")
    gs = critical_point(phi, lat, omega=float(blk["omega"]))
    write_snapshot(outdir / "q_critical.hrtf", gs.Q)
    vir = virial_check(gs, ExternalPotential(kind="zero", lam=0.0), phi)
    eps = float(blk["mass_eps"])
    outcomes = {}
    for tag, fac in (("up", 1.0 + eps), ("down", 1.0 - eps)):
        psi0 = Field(lat, fac * gs.Q.values)
        pcfg = _prop_config(
            cfg, t_end=float(blk["horizon"]),
            blowup_gradnorm_factor=float(blk["gradnorm_factor"]))
        log = evolve(psi0, ExternalPotential(kind="zero", lam=0.0), phi, pcfg)
        write_records_csv(outdir / f"records_{tag}.csv", log.records)
        outcomes[tag] = {"outcome": log.outcome, "t_event": log.t_event}
    summary = {
        "N_critical": gs.N, "virial_ratio": vir.ratio,
        "up": outcomes["up"], "down": outcomes["down"],
    }
    event = outcomes["up"]["outcome"] == "blowup_detected"
    print(f"blowup: (1+{eps})Q -> {outcomes['up']['outcome']}"
          f" at t={outcomes['up']['t_event']}, (1-{eps})Q -> "
          f"{outcomes['down']['outcome']}")
    overall = "blowup_detected" if event else "completed"
    return (EXIT_EVENT if event else EXIT_OK), overall, summary


_DRIVERS = {
    "evolve": run_evolve,
    "groundstate": run_groundstate,
    "linearize": run_linearize,
    "trapdance": run_trapdance,
    "newtonian": run_newtonian,
    "manybody": run_manybody,
    "stability": run_stability,
    "blowup": run_blowup,
}


def run(cfg: ExperimentConfig, out_flag=None, threads=None,
        make_plots: bool = True):
    """Dispatch one experiment; returns the process exit code."""
    outdir = resolve_outdir(cfg, out_flag)
    _apply_threads(cfg, threads)
    t0 = time.time()
    try:
        code, outcome, summary = _DRIVERS[cfg.subcommand](cfg, outdir)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status
        wall = time.time() - t0
        write_manifest(outdir, cfg, f"failed: {exc}", wall, {})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if make_plots:
        try:
            plots.render(cfg.subcommand, outdir)
        except Exception as exc:  # plotting must never fail the run
            print(f"warning: plot rendering failed: {exc}", file=sys.stderr)
    wall = time.time() - t0
    write_manifest(outdir, cfg, outcome, wall, summary)
    return code
