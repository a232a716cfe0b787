import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from wlerg.cli import main
from wlerg.sampler import read_edge_list

SUBCOMMANDS = ["sample", "fit", "eval", "scan", "tilt", "phase", "transform"]


def _files(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture
def er_spec(tmp_path):
    p = tmp_path / "er.json"
    p.write_text(json.dumps({"type": "er", "p": 0.3}))
    return p


@pytest.fixture
def two_block_graph(tmp_path):
    spec = tmp_path / "tb.json"
    spec.write_text(json.dumps({"type": "two_block", "p_in": 0.6, "p_out": 0.2}))
    out = tmp_path / "g"
    assert main(["sample", "--kernel", str(spec), "--n", "256", "--seed", "3", "--out", str(out)]) == 0
    return spec, out


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    assert "usage" in capsys.readouterr().out


class TestSample:
    def test_er_density(self, tmp_path, er_spec):
        out = tmp_path / "o"
        assert main(["sample", "--kernel", str(er_spec), "--n", "100", "--out", str(out)]) == 0
        lg = read_edge_list(out / "edges.txt")
        assert lg.n == 100
        assert abs(lg.density() - 0.3) < 0.05
        lines = (out / "positions.csv").read_text().splitlines()
        assert lines[0] == "vertex,u" and len(lines) == 101
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "sample"
        assert manifest["config"]["n"] == 100 and manifest["config"]["seed"] == 0

    def test_single_vertex(self, tmp_path, er_spec):
        out = tmp_path / "o"
        assert main(["sample", "--kernel", str(er_spec), "--n", "1", "--out", str(out)]) == 0
        assert read_edge_list(out / "edges.txt").n_edges == 0

    def test_rerun_and_threads_identical(self, tmp_path, er_spec):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["sample", "--kernel", str(er_spec), "--n", "300", "--seed", "5", "--out", str(a), "--threads", "1"])
        main(["sample", "--kernel", str(er_spec), "--n", "300", "--seed", "5", "--out", str(b), "--threads", "4"])
        fa, fb = _files(a), _files(b)
        assert fa["edges.txt"] == fb["edges.txt"] and fa["positions.csv"] == fb["positions.csv"]

    def test_bad_spec(self, tmp_path, capsys):
        spec = tmp_path / "bad.json"
        spec.write_text(json.dumps({"type": "er", "p": 1.5}))
        assert main(["sample", "--kernel", str(spec), "--n", "10", "--out", str(tmp_path / "o")]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_kernel_type(self, tmp_path):
        spec = tmp_path / "bad.json"
        spec.write_text(json.dumps({"type": "mystery"}))
        assert main(["sample", "--kernel", str(spec), "--n", "10", "--out", str(tmp_path / "o")]) == 1

    def test_missing_file_and_bad_n(self, tmp_path, er_spec):
        assert main(["sample", "--kernel", str(tmp_path / "nope.json"), "--n", "10", "--out", str(tmp_path)]) == 1
        assert main(["sample", "--kernel", str(er_spec), "--n", "0", "--out", str(tmp_path)]) == 1

    def test_unknown_flag(self):
        assert main(["sample", "--bogus"]) == 1


class TestReplay:
    def test_manifest_reproduces_directory(self, tmp_path, two_block_graph):
        _, g = two_block_graph
        a, b = tmp_path / "fa", tmp_path / "fb"
        args = ["fit", "--input", str(g / "edges.txt"), "--K", "16", "--kappa", "0.5", "--fraction", "0.1", "--seed", "4"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(["fit", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
        assert _files(a) == _files(b)

    def test_manifest_command_mismatch(self, tmp_path, two_block_graph):
        _, g = two_block_graph
        assert main(["scan", "--config", str(g / "manifest.json"), "--out", str(tmp_path / "x")]) == 1


class TestCommands:
    def test_fit(self, tmp_path, two_block_graph):
        _, g = two_block_graph
        out = tmp_path / "fit"
        assert main(["fit", "--input", str(g / "edges.txt"), "--K", "16", "--method", "fiedler", "--out", str(out)]) == 0
        report = json.loads((out / "fit.json").read_text())
        assert report["K"] == 16 and report["method"] == "fiedler"
        assert len((out / "surface.csv").read_text().splitlines()) == 16 * 16 + 1
        assert (out / "coefficients.csv").read_text().startswith("j1,l1,j2,l2,value")

    def test_eval(self, tmp_path, two_block_graph):
        _, g = two_block_graph
        out = tmp_path / "ev"
        args = ["eval", "--input", str(g / "edges.txt"), "--K", "16", "--splits", "2", "--sbm-blocks", "2",
                "--sweep", "--sweep-K", "8,16", "--sweep-kappa", "0.5,1", "--out", str(out)]
        assert main(args) == 0
        rows = (out / "metrics.csv").read_text().splitlines()
        assert rows[0].startswith("dataset,method,auc_mean")
        assert [r.split(",")[1] for r in rows[1:]] == ["WL", "HIST", "SBM"]
        assert len((out / "sweep.csv").read_text().splitlines()) == 5
        assert (out / "reliability_WL.csv").exists() and (out / "pred_histogram_SBM.csv").exists()

    def test_eval_rejects_zero_splits(self, tmp_path, two_block_graph):
        _, g = two_block_graph
        assert main(["eval", "--input", str(g / "edges.txt"), "--splits", "0", "--out", str(tmp_path / "e")]) == 1

    def test_scan_known_kernel(self, tmp_path, two_block_graph):
        spec, g = two_block_graph
        out = tmp_path / "sc"
        args = ["scan", "--input", str(g / "edges.txt"), "--positions", str(g / "positions.csv"),
                "--kernel", str(spec), "--scales", "1-3", "--out", str(out)]
        assert main(args) == 0
        lines = (out / "scan.csv").read_text().splitlines()
        assert lines[0] == "j,l,m,N,T,Z,detected" and len(lines) == 1 + 2 + 4 + 8
        assert "z_max" in json.loads((out / "scan.json").read_text())

    def test_scan_kernel_needs_positions(self, tmp_path, two_block_graph):
        spec, g = two_block_graph
        assert main(["scan", "--input", str(g / "edges.txt"), "--kernel", str(spec), "--out", str(tmp_path / "s")]) == 1

    def test_scan_residual(self, tmp_path, two_block_graph):
        _, g = two_block_graph
        out = tmp_path / "sr"
        assert main(["scan", "--input", str(g / "edges.txt"), "--K", "16", "--scales", "1,2", "--out", str(out)]) == 0
        assert len((out / "scan.csv").read_text().splitlines()) == 1 + 2 + 4
        assert main(["scan", "--input", str(g / "edges.txt"), "--K", "16", "--scales", "5", "--out", str(out)]) == 1

    def test_tilt(self, tmp_path, er_spec):
        d = tmp_path / "dir.json"
        d.write_text(json.dumps({"lam0": 0.5, "entries": [{"j1": 0, "l1": 0, "j2": 0, "l2": 0, "value": 0.25}]}))
        out = tmp_path / "t"
        args = ["tilt", "--kernel", str(er_spec), "--direction", str(d), "--ts=-1,0,1", "--n", "80",
                "--reps", "2", "--out", str(out)]
        assert main(args) == 0
        rows = (out / "tilt.csv").read_text().splitlines()
        assert rows[0].startswith("t,edge_density_mean") and len(rows) == 4
        mgf = json.loads((out / "mgf.json").read_text())
        assert mgf[1]["t"] == 0.0 and mgf[1]["value"] == 0.0
        assert all(r["min_eigenvalue"] > 0 for r in mgf)

    def test_phase_coarse_visible_fine_hidden(self, tmp_path):
        out = tmp_path / "ph"
        args = ["phase", "--n", "1024", "--c", "0", "--betas", "0.4,0.1,0.01", "--multipliers", "1", "--reps", "2",
                "--out", str(out)]
        assert main(args) == 0
        rows = [r.split(",") for r in (out / "phase.csv").read_text().splitlines()[1:]]
        err = {int(r[1]): float(r[4]) for r in rows}
        assert err[0] < 0.05 and err[2] > 0.3
        assert "np.float64" not in (out / "phase.csv").read_text()

    def test_transform_round_trip(self, tmp_path):
        grid = np.random.default_rng(0).normal(size=(8, 8))
        src = tmp_path / "grid.csv"
        src.write_text("".join(",".join(repr(float(x)) for x in row) + "\n" for row in grid))
        fwd, inv = tmp_path / "f", tmp_path / "i"
        assert main(["transform", "--input", str(src), "--out", str(fwd)]) == 0
        assert main(["transform", "--inverse", "--input", str(fwd / "coefficients.csv"), "--out", str(inv)]) == 0
        back = np.loadtxt(inv / "grid.csv", delimiter=",")
        np.testing.assert_allclose(back, grid, atol=1e-11)

    def test_transform_missing_input(self, tmp_path):
        assert main(["transform", "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "wlerg.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("wlerg ")
