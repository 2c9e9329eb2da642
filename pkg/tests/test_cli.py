import json
import shutil
from importlib.resources import files

import numpy as np
import pytest

from youngreg import __version__
from youngreg.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_INVALID, resolve_config, run
from youngreg.fbm import read_path_csv


class TestExamples:
    def test_sample_fbm(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        assert run(["sample-fbm", "--H", "0.5", "--d", "1", "--depth", "10", "--seed", "7", "--out", str(out)]) == EXIT_OK
        with open(out) as fh:
            path = read_path_csv(fh)
        assert path.values.shape == (1025, 1)
        assert np.all(path.values[0] == 0)
        assert "1025 rows" in capsys.readouterr().out

    def test_solve_bundled(self, tmp_path):
        field = tmp_path / "b.json"
        shutil.copy(files("youngreg") / "data" / "smooth_4pair.json", field)
        out = tmp_path / "sol.csv"
        argv = ["solve", "--field", str(field), "--H", "0.5", "--x0", "0,0", "--gamma", "0.55", "--depth", "12", "--out", str(out)]
        assert run(argv) == EXIT_OK
        diag = json.loads(out.with_suffix(".json").read_text())
        assert diag["status"] == "converged"
        lines = out.read_text().splitlines()
        assert lines[1] == "t,theta1,theta2,x1,x2"
        assert len(lines) == 2**12 + 3

    def test_moments(self, tmp_path):
        out = tmp_path / "m.json"
        assert run(["moments", "--H", "0.5", "--xi", "2", "--p", "1", "--n", "4000", "--seed", "1", "--out", str(out)]) == EXIT_OK
        rep = json.loads(out.read_text())["report"]
        assert rep["exact"] == pytest.approx(2 * (2 - 1 + np.exp(-2)) / 4)
        assert abs(rep["mean"] - rep["exact"]) <= 3 * rep["se"]


class TestReproducibility:
    @pytest.mark.parametrize(
        "argv, name",
        [
            (["sample-fbm", "--H", "0.3", "--d", "2", "--depth", "8", "--seed", "3"], "path.csv"),
            (["eval-y", "--H", "0.7", "--depth", "8", "--xi", "3", "--omega", "2", "--s", "0.25"], "eval_y.json"),
            (["estimate-k", "--depth", "8", "--n-max", "6", "--m-max", "0"], "estimate_k.json"),
            (["stats", "--depth", "8", "--n-max", "6", "--m-max", "0", "--n-paths", "2"], "stats.csv"),
            (["flow", "--depth", "8", "--x0", "0,0"], "flow.json"),
            (["converge", "--depth", "8", "--n-list", "1,4"], "converge.json"),
            (["moments", "--H", "0.4", "--xi", "2", "--n", "300", "--depth", "8"], "moments.json"),
        ],
    )
    def test_bit_identical_with_metadata(self, tmp_path, argv, name):
        target = tmp_path / name

        def once(workers):
            assert run(argv + ["--out-dir", str(tmp_path), "--workers", workers]) == EXIT_OK
            return target.read_bytes()

        first = once("1")
        assert once("1") == first
        # the worker count is part of the embedded config; everything else must match
        assert once("3").replace(b'"workers": 3', b'"workers": 1') == first
        text = first.decode()
        meta = json.loads(text.splitlines()[0][2:]) if name.endswith(".csv") else json.loads(text)
        assert meta["version"] == __version__
        assert meta["config"]["workers"] == 1


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"H": 0.3, "depth": 6}))
        cfg = resolve_config("sample-fbm", {"config": str(cfg_file), "depth": 8})
        assert (cfg["H"], cfg["depth"], cfg["d"]) == (0.3, 8, 1)

    def test_unknown_config_key(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"hurst": 0.3}))
        assert run(["sample-fbm", "--config", str(cfg_file), "--out-dir", str(tmp_path)]) == EXIT_INVALID


class TestExitCodes:
    @pytest.mark.parametrize(
        "argv",
        [
            ["sample-fbm", "--bogus", "1"],
            ["frobnicate"],
            ["sample-fbm", "--H", "1.5"],
            ["eval-y", "--xi", "1,2"],
            ["solve", "--field", "no_such_field"],
            ["moments", "--xi", "0"],
        ],
    )
    def test_validation(self, tmp_path, argv, capsys):
        assert run(argv + ["--out-dir", str(tmp_path)]) == EXIT_INVALID

    def test_numerical_failure(self, tmp_path):
        assert run(["sample-fbm", "--H", "0.3", "--depth", "14", "--out-dir", str(tmp_path)]) == EXIT_NUMERICAL
