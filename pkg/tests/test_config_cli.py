import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from inelastic1d.cli import EXIT_CODES, main, run
from inelastic1d.config import RunConfig, load_config, parse_config
from inelastic1d.errors import ConfigError


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config("mode = steady\ngamma = 1\na = 0.5\n")
        assert (cfg.L, cfg.N, cfg.k, cfg.threshold) == (20.0, 128, 2, 1e-4)
        assert cfg.drift_coeff is None

    def test_sections_and_comments(self):
        cfg = parse_config("# run\n[model]\nmode = dsmc  # particles\ngamma = 2\na = 0.3\n[particles]\n"
                           "n_particles = 500\n[stability]\nd0 = 1e-3, 5e-3\n")
        assert cfg.n_particles == 500 and cfg.d0 == (1e-3, 5e-3)

    def test_a_out_of_range(self):
        with pytest.raises(ConfigError, match="a ∈ \\(0,1\\)") as exc:
            parse_config("mode = steady\ngamma = 1\na = 1.2\n")
        assert exc.value.key == "a" and exc.value.line == 3

    @pytest.mark.parametrize("text,key,line", [
        ("mode = steady\ngamma = 1\na = 0.5\nfoo = 3\n", "foo", 4),
        ("mode = steady\ngamma = 1\ngamma = 2\na = 0.5\n", "gamma", 3),
        ("mode = steady\ngamma = x\na = 0.5\n", "gamma", 2),
        ("mode = steady\ngamma = 1\na = 0.5\nN = 12.5\n", "N", 4),
        ("mode = fly\ngamma = 1\na = 0.5\n", "mode", 1),
        ("[nowhere]\nmode = steady\n", "nowhere", 1),
        ("mode = steady\na = 0.5\n", "gamma", None),
    ])
    def test_errors_name_key_and_line(self, text, key, line):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.key == key and exc.value.line == line
        assert f"key '{key}'" in str(exc.value)

    def test_round_trip(self):
        cfg = parse_config("mode = stability\ngamma = 1.5\na = 0.1\ndrift_coeff = 0.7\nd0 = 0.001, 0.01\n"
                           "out_dir = 'some dir'\n")
        assert parse_config(cfg.to_text()) == cfg

    def test_initial_file_relative(self, tmp_path):
        (tmp_path / "g.csv").write_text("xi,g\n-1,0.5\n1,0.5\n")
        p = write(tmp_path, "mode = steady\ngamma = 1\na = 0.5\ninitial = file\ninitial_file = g.csv\n")
        assert load_config(p).initial_file == str(tmp_path / "g.csv")
        p2 = write(tmp_path, "mode = steady\ngamma = 1\na = 0.5\ninitial = file\ninitial_file = nope.csv\n", "b.cfg")
        with pytest.raises(ConfigError):
            load_config(p2)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestRun:
    def test_transient_energy_column(self, tmp_path):
        cfg = parse_config("mode = transient\ngamma = 1\na = 0.5\ndrift_coeff = 0\nL = 3\nN = 24\nt_end = 4\n"
                           "record_every = 5\n")
        assert run(cfg, tmp_path) == 0
        rows = read_csv(tmp_path / "moments.csv")
        assert rows[0] == ["time", "M0", "M1abs", "M2", "M3", "M4", "momentum", "residual"]
        e = np.array([float(r[3]) for r in rows[1:]])
        assert np.all(np.diff(e) <= 0)
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["status"] == "ok" and s["energy_nonincreasing"]
        assert parse_config(s["config_text"]) == cfg

    def test_dsmc_byte_identical(self, tmp_path):
        cfg = parse_config("mode = dsmc\ngamma = 1\na = 0.5\nn_particles = 300\nt_end = 5\nseed = 4\n")
        assert run(cfg, tmp_path / "a") == 0
        assert run(cfg, tmp_path / "b") == 0
        for f in ("moments.csv", "profile.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_steady_gamma0_reference_column(self, tmp_path):
        cfg = parse_config("mode = steady\ngamma = 0\na = 0.5\nL = 10\nN = 16\nmax_steps = 20\ninitial = m1\n")
        assert run(cfg, tmp_path) == EXIT_CODES["max_steps"]
        rows = read_csv(tmp_path / "profile.csv")
        assert rows[0] == ["xi", "g", "reference"]
        x, g, ref = np.array(rows[1:], dtype=float).T
        np.testing.assert_allclose(ref, 2 / np.pi / (1 + x**2) ** 2, rtol=1e-15)
        assert np.max(np.abs(g - ref)) < 0.05
        assert json.loads((tmp_path / "summary.json").read_text())["status"] == "max_steps"

    def test_checks_mode_reports_failed_check(self, tmp_path):
        cfg = parse_config("mode = checks\ngamma = 1\na = 0.5\nn_samples = 2000\n")
        assert run(cfg, tmp_path) == EXIT_CODES["check_failed"]
        rows = read_csv(tmp_path / "checks.csv")
        assert rows[1][0] == "mixing inequality" and rows[1][-1] == "0"
        assert all(r[-1] == "1" for r in rows[2:])

    def test_rescaled_and_stability(self, tmp_path):
        cfg = parse_config("mode = rescaled-dsmc\ngamma = 1\na = 0.5\nn_particles = 400\nt_end = 2\n"
                           "n_records = 8\n")
        assert run(cfg, tmp_path / "r") == 0
        s = json.loads((tmp_path / "r" / "summary.json").read_text())
        assert s["rescaled_bounds"]["violations"] == []
        cfg = parse_config("mode = stability\ngamma = 1\na = 0.5\nn_particles = 200\nt_end = 1\nn_seeds = 3\n")
        assert run(cfg, tmp_path / "s") == 0
        rows = read_csv(tmp_path / "s" / "stability.csv")
        assert rows[0] == ["time", "d0", "median", "q25", "q75"]
        assert len(rows) == 1 + 2 * 21


class TestMain:
    def test_config_error_exit(self, tmp_path, capsys):
        p = write(tmp_path, "mode = steady\ngamma = 1\na = 1.2\n")
        assert main(["--config", str(p), "--quiet"]) == EXIT_CODES["config"]
        assert "a ∈ (0,1)" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "none.cfg"), "--quiet"]) == EXIT_CODES["config"]

    def test_io_error(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        p = write(tmp_path, "mode = dsmc\ngamma = 1\na = 0.5\nn_particles = 10\nt_end = 1\n")
        assert main(["--config", str(p), "--out", str(blocker / "sub"), "--quiet"]) == EXIT_CODES["io"]

    def test_replicates(self, tmp_path):
        p = write(tmp_path, "mode = dsmc\ngamma = 1\na = 0.5\nn_particles = 200\nt_end = 2\n")
        out = tmp_path / "out"
        assert main(["--config", str(p), "--out", str(out), "--replicates", "3", "--seed", "5", "--quiet"]) == 0
        s = json.loads((out / "summary.json").read_text())
        assert [r["seed"] for r in s["replicates"]] == [5, 6, 7]
        assert (out / "replicate_002" / "moments.csv").exists()
        assert "final_moments_mean" in s

    def test_module_entry_point(self, tmp_path):
        p = write(tmp_path, "mode = dsmc\ngamma = 2\na = 0.5\nn_particles = 50\nt_end = 1\n")
        r = subprocess.run([sys.executable, "-m", "inelastic1d", "--config", str(p), "--out", str(tmp_path / "o"),
                            "--quiet"], capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        assert (tmp_path / "o" / "summary.json").exists()
