import json

import numpy as np
import pytest

from multisqueeze import cli, pipeline
from multisqueeze.config import ExperimentConfig, loads
from multisqueeze.frame_synth import load_ensemble, save_ensemble

SMALL = "acquisition:\n  n_frames: 300\n  seeds: [0, 1]\n"


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(SMALL)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestCommands:
    """Subcommands and exit codes."""

    def test_full_small(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "run"
        assert run("full", "--config", small_cfg, "--out", out) == 0
        printed = capsys.readouterr().out
        assert "collinear visibility: 0.939" in printed
        assert len(list((out / "frames").glob("*.msq"))) == 6
        rep = json.loads((out / "report" / "squeezing_report.json").read_text())
        assert len(rep["modes"]) == 8 and rep["meta"]["seeds"] == [0, 1]
        assert rep["meta"]["n_keep"] == 12
        assert pipeline.RunManifest.verify(out / "manifest.json") == []
        header = (out / "report" / "squeezing_report.csv").read_text().splitlines()[0]
        assert header == "mode,S_dB,S_err,AS_dB,AS_err,S_truth,AS_truth"

    def test_stages_and_determinism(self, small_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("simulate", "--config", small_cfg, "--out", out) == 0
            assert run("reconstruct", "--config", small_cfg, "--out", out) == 0
            assert run("report", "--config", small_cfg, "--out", out) == 0
        for name in ("frames/frames_dark_seed1.msq", "report/squeezing_report.json"):
            assert pipeline.sha256_file(a / name) == pipeline.sha256_file(b / name)
        rec = json.loads((a / "recon" / "recon_vacuum_seed0.json").read_text())
        assert rec["n_keep"] == 12 and len(rec["weights_by_mode"]) == 12

    def test_seed_override(self, small_cfg, tmp_path):
        out = tmp_path / "s"
        assert run("simulate", "--config", small_cfg, "--out", out, "--seed-override", 7) == 0
        assert sorted(p.name for p in (out / "frames").iterdir()) == [
            "frames_bright_seed7.msq", "frames_dark_seed7.msq", "frames_vacuum_seed7.msq"]

    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        out = tmp_path / "dry"
        assert run("full", "--out", out, "--dry-run") == 0
        text = capsys.readouterr().out
        assert text.count("simulate 1500 frames") == 12
        assert not out.exists()

    def test_scan_phase(self, tmp_path, capsys):
        assert run("scan-phase", "--out", tmp_path / "p") == 0
        assert "visibility 0.939" in capsys.readouterr().out
        data = np.loadtxt(tmp_path / "p" / "report" / "phase_scan.csv", delimiter=",")
        assert data.shape == (200, 2)

    def test_config_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("loss:\n  eta_pre: 2\n")
        assert run("simulate", "--config", bad, "--out", tmp_path / "x") == cli.EXIT_CONFIG
        assert "loss.eta_pre" in capsys.readouterr().err

    def test_corrupt_file_exit(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "c"
        run("simulate", "--config", small_cfg, "--out", out, "--seed-override", 0)
        target = out / "frames" / "frames_bright_seed0.msq"
        raw = bytearray(target.read_bytes())
        raw[-3] ^= 0x55
        target.write_bytes(bytes(raw))
        assert run("reconstruct", "--config", small_cfg, "--out", out, target) == cli.EXIT_DATA
        assert "frames_bright_seed0.msq" in capsys.readouterr().err

    def test_single_frame_file(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "one"
        run("simulate", "--config", small_cfg, "--out", out, "--seed-override", 0)
        src = out / "frames" / "frames_dark_seed0.msq"
        ens = load_ensemble(src)
        save_ensemble(type(ens)(ens.frames[:1], ens.grid, ens.config, ens.meta), src)
        assert run("reconstruct", "--config", small_cfg, "--out", out, src) == cli.EXIT_DATA
        assert "fewer than 2 frames" in capsys.readouterr().err

    def test_degenerate_exit(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "z"
        run("simulate", "--config", small_cfg, "--out", out, "--seed-override", 0)
        src = out / "frames" / "frames_vacuum_seed0.msq"
        ens = load_ensemble(src)
        save_ensemble(type(ens)(np.ones_like(ens.frames), ens.grid, ens.config, ens.meta), src)
        assert run("reconstruct", "--config", small_cfg, "--out", out, src) == cli.EXIT_DEGENERATE

    def test_missing_fringe(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "m"
        run("simulate", "--config", small_cfg, "--out", out, "--seed-override", 0)
        run("reconstruct", "--config", small_cfg, "--out", out)
        (out / "recon" / "recon_dark_seed0.json").unlink()
        assert run("report", "--config", small_cfg, "--out", out) == cli.EXIT_DATA
        assert "missing the dark" in capsys.readouterr().err

    def test_grid_mismatch(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "g"
        run("simulate", "--config", small_cfg, "--out", out, "--seed-override", 0)
        other = tmp_path / "other.yaml"
        other.write_text(SMALL + "grid:\n  n_points: 401\n")
        assert run("reconstruct", "--config", other, "--out", out) == cli.EXIT_DATA
        assert "does not match" in capsys.readouterr().err

    def test_workers_env(self, small_cfg, tmp_path, monkeypatch):
        run("simulate", "--config", small_cfg, "--out", tmp_path / "w1")
        monkeypatch.setenv(pipeline.WORKERS_ENV, "3")
        run("simulate", "--config", small_cfg, "--out", tmp_path / "w3")
        for p in (tmp_path / "w1" / "frames").iterdir():
            assert pipeline.sha256_file(p) == pipeline.sha256_file(tmp_path / "w3" / "frames" / p.name)

    def test_single_seed_report_has_no_uncertainty(self, small_cfg, tmp_path):
        out = tmp_path / "one_seed"
        assert run("full", "--config", small_cfg, "--out", out, "--seed-override", 2) == 0
        rows = json.loads((out / "report" / "squeezing_report.json").read_text())["modes"]
        assert all(r["S_err"] is None for r in rows)


class TestPipeline:
    """Model construction and manifest."""

    def test_default_model(self, default_model):
        assert default_model.loss_eta == 0.85
        assert default_model.amplifier.basis.width > default_model.squeezer.basis.width
        assert 3.0 < default_model.meta["amplifier_r0"] < 4.0

    def test_user_g(self, tmp_path, default_model):
        np.savetxt(tmp_path / "g.csv", np.eye(24), delimiter=",")
        cfg = loads(f"reconstruction:\n  g_file: {tmp_path / 'g.csv'}\n")
        np.testing.assert_array_equal(pipeline.build_model(cfg).g.entries, np.eye(24))

    def test_file_sizes(self, tmp_path):
        cfg = ExperimentConfig().with_seeds([0]).with_output(tmp_path)
        paths = pipeline.simulate(cfg)
        assert len(paths) == 3
        payload = 1500 * 601 * 8
        for p in paths:
            assert payload < p.stat().st_size < payload + 4096

    def test_manifest_detects_change(self, tmp_path):
        cfg = ExperimentConfig().with_output(tmp_path)
        m = pipeline.RunManifest.for_config(cfg)
        f = tmp_path / "x.txt"
        f.write_text("a")
        m.add(f, tmp_path)
        path = m.write(tmp_path)
        assert pipeline.RunManifest.verify(path) == []
        f.write_text("b")
        assert pipeline.RunManifest.verify(path) == ["x.txt"]
