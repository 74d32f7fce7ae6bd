"""Figure rendering for the report path: each subcommand's delimited output
gets a companion PNG in the same directory."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render"]


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    return header, data


def _col(header, data, name):
    return data[:, header.index(name)]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _plot_records(path, out):
    header, data = _read_csv(path)
    t = _col(header, data, "t")
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
    N = _col(header, data, "N")
    H = _col(header, data, "H")
    axes[0, 0].plot(t, np.abs(N / N[0] - 1.0))
    axes[0, 0].set_yscale("log")
    axes[0, 0].set_ylabel("|N(t)/N(0) - 1|")
    scale = max(abs(H[0]), 1e-300)
    axes[0, 1].plot(t, np.abs(H - H[0]) / scale)
    axes[0, 1].set_yscale("log")
    axes[0, 1].set_ylabel("|H(t) - H(0)| / |H(0)|")
    axes[1, 0].plot(t, _col(header, data, "variance"))
    axes[1, 0].set_ylabel("variance")
    axes[1, 0].set_xlabel("t")
    axes[1, 1].plot(t, _col(header, data, "gradnorm"))
    axes[1, 1].set_ylabel("||grad psi||")
    axes[1, 1].set_xlabel("t")
    _save(fig, out)


def _plot_evolve(outdir):
    rec = outdir / "records.csv"
    if rec.exists():
        _plot_records(rec, outdir / "records.png")


def _plot_blowup(outdir):
    fig, ax = plt.subplots(figsize=(6, 4))
    for tag, style in (("up", "-"), ("down", "--")):
        path = outdir / f"records_{tag}.csv"
        if not path.exists():
            continue
        header, data = _read_csv(path)
        ax.plot(_col(header, data, "t"), _col(header, data, "gradnorm"),
                style, label=f"records_{tag}")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("||grad psi||")
    ax.legend()
    _save(fig, outdir / "gradnorm.png")


def _plot_groundstate(outdir):
    path = outdir / "curve.csv"
    if not path.exists():
        return
    header, data = _read_csv(path)
    if data.shape[0] < 2:
        return
    N = _col(header, data, "N")
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(N, _col(header, data, "E"), "o-")
    axes[0].set_xlabel("N")
    axes[0].set_ylabel("E(N)")
    axes[1].plot(N, _col(header, data, "omega"), "o-")
    axes[1].set_xlabel("N")
    axes[1].set_ylabel("omega(N)")
    _save(fig, outdir / "curve.png")


def _plot_linearize(outdir):
    path = outdir / "spectrum.csv"
    if not path.exists():
        return
    header, data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(_col(header, data, "index"), _col(header, data, "eigenvalue"), "o")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    _save(fig, outdir / "spectrum.png")


def _plot_trapdance(outdir):
    path = outdir / "orbit.csv"
    if not path.exists():
        return
    header, data = _read_csv(path)
    t = _col(header, data, "t")
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(t, _col(header, data, "x1"), label="tracked")
    axes[0].plot(t, _col(header, data, "xref1"), "--", label="closed form")
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("x_c")
    axes[0].legend()
    e = _col(header, data, "orbit_energy")
    axes[1].plot(t, e - e[0])
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("p^2 + x^2 minus initial")
    _save(fig, outdir / "orbit.png")


def _plot_newtonian(outdir):
    tr = outdir / "tracked.csv"
    ref = outdir / "reference.csv"
    if not (tr.exists() and ref.exists()):
        return
    h1, d1 = _read_csv(tr)
    h2, d2 = _read_csv(ref)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for name in h1:
        if name.startswith("q") and name.endswith("_1"):
            axes[0].plot(_col(h1, d1, "t"), _col(h1, d1, name), label=name)
            axes[0].plot(_col(h2, d2, "t"), _col(h2, d2, name), "k--", lw=0.8)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("first component (dashed: reduced dynamics)")
    axes[0].legend(fontsize=8)
    dev = outdir / "deviation.csv"
    if dev.exists():
        h3, d3 = _read_csv(dev)
        axes[1].plot(_col(h3, d3, "t"), _col(h3, d3, "deviation"))
        axes[1].set_xlabel("t")
        axes[1].set_ylabel("max_j |tracked - reference|")
    _save(fig, outdir / "trajectories.png")


def _plot_manybody(outdir):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    dev = outdir / "deviation.csv"
    if dev.exists():
        h, d = _read_csv(dev)
        axes[0].plot(_col(h, d, "N"), _col(h, d, "trace_distance"), "o-")
        axes[0].set_xlabel("N")
        axes[0].set_ylabel("trace distance to Hartree projector")
    en = outdir / "energies.csv"
    if en.exists():
        h, d = _read_csv(en)
        axes[1].plot(_col(h, d, "N"), _col(h, d, "gap_to_e0"), "o-")
        axes[1].set_xlabel("N")
        axes[1].set_ylabel("|E0_N/N - e0|")
    _save(fig, outdir / "meanfield.png")


def _plot_stability(outdir):
    fig, ax = plt.subplots(figsize=(6, 3.6))
    any_line = False
    for name, label in (("distance.csv", "perturbed"),
                        ("boosted_distance.csv", "boosted (comoving)")):
        path = outdir / name
        if not path.exists():
            continue
        h, d = _read_csv(path)
        ax.plot(_col(h, d, "t"), _col(h, d, "manifold_distance"), label=label)
        any_line = True
    if not any_line:
        plt.close(fig)
        return
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("d(psi(t))")
    ax.legend()
    _save(fig, outdir / "distance.png")


_RENDERERS = {
    "evolve": _plot_evolve,
    "groundstate": _plot_groundstate,
    "linearize": _plot_linearize,
    "trapdance": _plot_trapdance,
    "newtonian": _plot_newtonian,
    "manybody": _plot_manybody,
    "stability": _plot_stability,
    "blowup": _plot_blowup,
}


def render(subcommand: str, outdir) -> None:
    fn = _RENDERERS.get(subcommand)
    if fn is not None:
        fn(Path(outdir))
