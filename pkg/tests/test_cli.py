"""Config parsing, CLI dispatch, manifests, determinism, figure rendering."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hartreelab.config import ConfigError, config_hash, parse, serialize
from hartreelab.runner import EXIT_EVENT, run

MINIMAL_EVOLVE = """
subcommand: evolve
lattice: {d: 1, n: 32, half_width: 8.0}
potential:
  twobody: {kind: gaussian, sign: -1, nu: 0.5}
run: {dt: 1.0e-2, t_end: 0.2, record_every: 5}
initial: {kind: gaussian, width: 1.0, charge: 1.0}
"""


class TestParse:
    def test_minimal_config_defaults_filled(self):
        cfg = parse(MINIMAL_EVOLVE)
        assert cfg.subcommand == "evolve"
        assert cfg.data["potential"]["external"]["kind"] == "zero"
        assert cfg.data["run"]["seed"] == 0
        assert cfg.lattice().n == 32

    def test_round_trip_identity(self):
        cfg = parse(MINIMAL_EVOLVE)
        again = parse(serialize(cfg))
        assert again.data == cfg.data
        assert config_hash(again) == config_hash(cfg)

    def test_unknown_keys_rejected(self):
        txt = MINIMAL_EVOLVE + "\nbogus_section: {a: 1}\n"
        with pytest.raises(ConfigError) as err:
            parse(txt)
        assert any("bogus_section" in e for e in err.value.errors)

    def test_unknown_nested_key_path_reported(self):
        txt = MINIMAL_EVOLVE.replace("run: {dt: 1.0e-2,",
                                     "run: {dtt: 1.0e-2,")
        with pytest.raises(ConfigError) as err:
            parse(txt)
        assert any("run.dtt" in e for e in err.value.errors)

    def test_yaml_error_carries_line(self):
        with pytest.raises(ConfigError) as err:
            parse("subcommand: evolve\nlattice: {d: 3,, n: 8}\n")
        assert "line" in err.value.errors[0]

    def test_sigma2_groundstate_guard(self):
        txt = """
subcommand: groundstate
lattice: {d: 3, n: 16, half_width: 8.0}
potential:
  twobody: {kind: power_law, sigma: 2.0, sign: -1, nu: 1.0}
groundstate: {charges: [1.0]}
"""
        with pytest.raises(ConfigError) as err:
            parse(txt)
        assert any("bounded" in e for e in err.value.errors)

    def test_bad_lattice_rejected(self):
        txt = MINIMAL_EVOLVE.replace("n: 32", "n: 33")
        with pytest.raises(ConfigError):
            parse(txt)


class TestRunEvolve:
    def _run(self, tmp_path, extra="", plots=False):
        cfg = parse(MINIMAL_EVOLVE + extra)
        out = tmp_path / "run"
        code = run(cfg, out_flag=out, threads=1, make_plots=plots)
        return code, out

    def test_artifacts_and_manifest(self, tmp_path):
        code, out = self._run(tmp_path)
        assert code == 0
        assert (out / "records.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["outcome"] == "completed"
        assert "records.csv" in manifest["files"]
        assert len(manifest["files"]["records.csv"]) == 64  # sha256 hex
        assert manifest["config"]["subcommand"] == "evolve"

    def test_manifest_checksums_every_file(self, tmp_path):
        code, out = self._run(tmp_path, plots=True)
        manifest = json.loads((out / "manifest.json").read_text())
        produced = {p.name for p in out.iterdir() if p.name != "manifest.json"}
        assert set(manifest["files"]) == produced

    def test_figures_rendered_alongside_csv(self, tmp_path):
        code, out = self._run(tmp_path, plots=True)
        assert (out / "records.png").exists()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = parse(MINIMAL_EVOLVE)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run(cfg, out_flag=out1, threads=1, make_plots=False)
        run(cfg, out_flag=out2, threads=1, make_plots=False)
        assert (out1 / "records.csv").read_bytes() == \
            (out2 / "records.csv").read_bytes()

    def test_snapshot_files_written(self, tmp_path):
        extra = """
run: {dt: 1.0e-2, t_end: 0.2, record_every: 5, snapshot_every: 1}
"""
        cfg = parse(MINIMAL_EVOLVE.replace(
            "run: {dt: 1.0e-2, t_end: 0.2, record_every: 5}", "") + extra)
        out = tmp_path / "snaps"
        run(cfg, out_flag=out, threads=1, make_plots=False)
        snaps = sorted(out.glob("snapshot_*.hrtf"))
        assert len(snaps) == 5
        from hartreelab.grid import read_snapshot
        f = read_snapshot(snaps[0])
        assert f.lattice.n == 32


class TestCliProcess:
    def test_validate_and_exit_codes(self, tmp_path):
        cfgfile = tmp_path / "cfg.yaml"
        cfgfile.write_text(MINIMAL_EVOLVE)
        res = subprocess.run(
            [sys.executable, "-m", "hartreelab.cli", "validate",
             "--config", str(cfgfile)], capture_output=True, text=True)
        assert res.returncode == 0
        assert "config ok" in res.stdout

    def test_config_error_exit_code(self, tmp_path):
        cfgfile = tmp_path / "bad.yaml"
        cfgfile.write_text(MINIMAL_EVOLVE + "\nnonsense: 1\n")
        res = subprocess.run(
            [sys.executable, "-m", "hartreelab.cli", "validate",
             "--config", str(cfgfile)], capture_output=True, text=True)
        assert res.returncode == 2
        assert "unknown" in res.stderr

    def test_subcommand_mismatch(self, tmp_path):
        cfgfile = tmp_path / "cfg.yaml"
        cfgfile.write_text(MINIMAL_EVOLVE)
        res = subprocess.run(
            [sys.executable, "-m", "hartreelab.cli", "groundstate",
             "--config", str(cfgfile)], capture_output=True, text=True)
        assert res.returncode == 2

    def test_evolve_end_to_end(self, tmp_path):
        cfgfile = tmp_path / "cfg.yaml"
        cfgfile.write_text(MINIMAL_EVOLVE)
        outdir = tmp_path / "out"
        res = subprocess.run(
            [sys.executable, "-m", "hartreelab.cli", "evolve",
             "--config", str(cfgfile), "--out", str(outdir),
             "--threads", "1", "--no-plot"],
            capture_output=True, text=True)
        assert res.returncode == 0
        assert (outdir / "manifest.json").exists()


class TestRunStabilityAndBlowup:
    def test_blowup_subcommand_event_exit(self, tmp_path):
        txt = """
subcommand: blowup
lattice: {d: 3, n: 32, half_width: 8.0}
potential:
  twobody: {kind: power_law, sigma: 2.0, sign: -1, nu: 1.0}
run: {dt: 1.0e-3, t_end: 4.0, record_every: 25}
blowup: {mass_eps: 0.05, omega: 1.0, horizon: 4.0, gradnorm_factor: 3.0}
"""
        cfg = parse(txt)
        out = tmp_path / "blow"
        code = run(cfg, out_flag=out, threads=2, make_plots=False)
        manifest = json.loads((out / "manifest.json").read_text())
        assert code == EXIT_EVENT
        assert manifest["summary"]["up"]["outcome"] == "blowup_detected"
        assert manifest["summary"]["down"]["outcome"] == "completed"
        assert manifest["summary"]["virial_ratio"] < 1e-3

    def test_manybody_subcommand(self, tmp_path):
        txt = """
subcommand: manybody
lattice: {d: 1, n: 8, half_width: 4.0}
potential:
  twobody: {kind: gaussian, sign: -1, nu: 1.0, width: 1.5}
manybody: {sites: 8, numbers: [2, 3], time: 0.5, initial_width: 1.2}
"""
        cfg = parse(txt)
        out = tmp_path / "mb"
        code = run(cfg, out_flag=out, threads=1, make_plots=True)
        assert code == 0
        assert (out / "deviation.csv").exists()
        assert (out / "energies.csv").exists()
        assert (out / "meanfield.png").exists()
