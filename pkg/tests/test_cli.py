import json
import math

import numpy as np

trapezoid = getattr(np, "trapezoid", None) or np.trapz
import pytest

from shorttime import cli


def write_cfg(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out.strip().splitlines()[-1])


COS = {"expr": "2 + cos(x)"}


class TestValidateCommand:
    def test_passing(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "scan_range": [-20, 20], "epsilon": 0.5,
        })
        code, manifest = run(capsys, "validate", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        assert manifest["command"] == "validate"
        assert manifest["passed"] is True
        report = json.loads((tmp_path / "validate_report.json").read_text())
        assert report["f_min"] == pytest.approx(1.0, abs=1e-4)

    def test_failing_drift_still_reports(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": {"expr": "x"}, "scan_range": [-5, 5], "epsilon": 0.5,
        })
        code, manifest = run(capsys, "validate", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        assert manifest["passed"] is False


class TestFlowCommand:
    def test_constant_drift(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": {"expr": "2"}, "t": 0.25, "x_values": [0.0, 1.0],
        })
        code, manifest = run(capsys, "flow", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        rows = (tmp_path / "flow.csv").read_text().strip().splitlines()
        assert rows[0] == "x,flow"
        got = [float(r.split(",")[1]) for r in rows[1:]]
        assert got == pytest.approx([0.5, 1.5])

    def test_epsilon_gate_blocks_bad_drift(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": {"expr": "x"}, "t": 0.1, "x_values": [1.0],
            "epsilon": 0.5, "scan_range": [-5, 5],
        })
        code, payload = run(capsys, "flow", "--config", cfg,
                            "--out-dir", str(tmp_path))
        assert code == 1
        assert payload["error"]["kind"] == "domain"


class TestDensityCommand:
    def test_all_kinds(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.1, "x_prime": 0.0, "kind": "all",
            "grid": {"x_min": -4.0, "x_max": 5.0, "n_points": 801},
        })
        code, manifest = run(capsys, "density", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        header = (tmp_path / "density.csv").read_text().splitlines()[0]
        assert header == "x,girsanov,euler_maruyama,backward_euler,haken"
        assert abs(manifest["mass_defect"]["girsanov"]) <= 1e-8
        assert manifest["mass_defect"]["backward_euler"] != 0.0

    def test_marginal_law(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.1, "kind": "girsanov",
            "law": {"atoms": [[0.0, 0.5], [0.5, 0.5]]},
            "grid": {"x_min": -4.0, "x_max": 5.0, "n_points": 901},
        })
        code, _ = run(capsys, "density", "--config", cfg,
                      "--out-dir", str(tmp_path))
        assert code == 0
        data = np.loadtxt(tmp_path / "density.csv", delimiter=",",
                          skiprows=1)
        assert trapezoid(data[:, 1], data[:, 0]) == pytest.approx(1.0,
                                                                 abs=1e-6)

    def test_narrow_grid_is_domain_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.1, "x_prime": 0.0,
            "grid": {"x_min": -0.2, "x_max": 0.8, "n_points": 101},
        })
        code, payload = run(capsys, "density", "--config", cfg,
                            "--out-dir", str(tmp_path))
        assert code == 1
        assert payload["error"]["kind"] == "domain"


class TestErrorAndRateCommands:
    def test_girsanov_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.1, "p_values": [1.0, 2.0],
            "mc": {"n_paths": 400, "n_steps": 32, "base_seed": 7},
        })
        code, manifest = run(capsys, "girsanov-error", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        assert manifest["seed"] == 7
        rows = (tmp_path / "errors.csv").read_text().strip().splitlines()
        assert rows[0] == "T,p,error_mean,std_error"
        assert len(rows) == 3

    def test_rate(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T_grid": [0.2, 0.1, 0.05], "p_values": [1.0],
            "mc": {"n_paths": 400, "n_steps": 64, "base_seed": 7},
        })
        code, manifest = run(capsys, "rate", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        fits = json.loads((tmp_path / "rate_fit.json").read_text())
        assert set(fits["1"]) == {"slope", "intercept", "r_squared"}
        assert manifest["fits"]["1"]["slope"] == fits["1"]["slope"]


class TestComposeAndFp:
    def test_compose_with_oracle(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.4, "x_prime": 0.0, "n_slices": 8,
            "kind": "girsanov", "compare_to_oracle": True,
            "n_time_steps": 400,
            "grid": {"x_min": -4.0, "x_max": 6.0, "n_points": 1201},
        })
        code, manifest = run(capsys, "compose", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        assert manifest["mass"] == pytest.approx(1.0, abs=1e-5)
        assert 0.0 < manifest["distance_to_oracle"] < 0.2

    def test_fp_solve(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": {"expr": "0"}, "T": 0.5, "x_prime": 0.0,
            "n_time_steps": 500,
            "grid": {"x_min": -6.0, "x_max": 6.0, "n_points": 1001},
        })
        code, manifest = run(capsys, "fp-solve", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        assert manifest["mass"] == pytest.approx(1.0, abs=1e-8)
        data = np.loadtxt(tmp_path / "fp.csv", delimiter=",", skiprows=1)
        peak = data[np.argmax(data[:, 1])]
        assert peak[0] == pytest.approx(0.0, abs=0.02)
        assert peak[1] == pytest.approx(1.0 / math.sqrt(math.pi), abs=1e-3)


class TestSampleCommand:
    def test_summary(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.1, "x_prime": 0.0, "seed": 5,
            "sample": {"n": 5000, "scheme": "crypto"},
        })
        code, manifest = run(capsys, "sample", "--config", cfg,
                             "--out-dir", str(tmp_path))
        assert code == 0
        assert manifest["ks_vs_kernel"] <= 0.03
        summary = json.loads((tmp_path / "sample_summary.json").read_text())
        assert summary["ks_vs_kernel"] == manifest["ks_vs_kernel"]

    def test_csv_output(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": {"expr": "2"}, "T": 0.25, "x_prime": 0.0, "seed": 5,
            "sample": {"n": 50, "scheme": "crypto", "output": "csv"},
        })
        code, _ = run(capsys, "sample", "--config", cfg,
                      "--out-dir", str(tmp_path))
        assert code == 0
        rows = (tmp_path / "samples.csv").read_text().strip().splitlines()
        assert rows[0] == "value"
        assert len(rows) == 51

    def test_unknown_scheme(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.1, "x_prime": 0.0,
            "sample": {"n": 10, "scheme": "magic"},
        })
        code, payload = run(capsys, "sample", "--config", cfg,
                            "--out-dir", str(tmp_path))
        assert code == 2
        assert payload["error"]["kind"] == "config"


class TestDeterminismAndErrors:
    def test_reruns_are_byte_identical(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": COS, "T": 0.1, "x_prime": 0.0, "seed": 5,
            "sample": {"n": 2000, "scheme": "crypto"},
        })
        d1 = tmp_path / "run1"
        d2 = tmp_path / "run2"
        for d in (d1, d2):
            code, _ = run(capsys, "sample", "--config", cfg,
                          "--out-dir", str(d))
            assert code == 0
        a = (d1 / "sample_summary.json").read_bytes()
        b = (d2 / "sample_summary.json").read_bytes()
        assert a == b

    def test_missing_key_is_config_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {"drift": COS})
        code, payload = run(capsys, "flow", "--config", cfg,
                            "--out-dir", str(tmp_path))
        assert code == 2
        assert payload["error"]["kind"] == "config"

    def test_unreadable_config(self, tmp_path, capsys):
        bad = tmp_path / "broken.json"
        bad.write_text("{not json")
        code, payload = run(capsys, "flow", "--config", str(bad),
                            "--out-dir", str(tmp_path))
        assert code == 2

    def test_set_override(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": {"expr": "2"}, "t": 0.25, "x_values": [0.0],
        })
        code, manifest = run(capsys, "flow", "--config", cfg,
                             "--out-dir", str(tmp_path), "--set", "t=0.5")
        assert code == 0
        assert manifest["t"] == 0.5
        rows = (tmp_path / "flow.csv").read_text().strip().splitlines()
        assert float(rows[1].split(",")[1]) == pytest.approx(1.0)

    def test_unknown_command_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.run_command("transmogrify", {})

    def test_out_dir_from_env(self, tmp_path, capsys, monkeypatch):
        cfg = write_cfg(tmp_path, "c.json", {
            "drift": {"expr": "2"}, "t": 0.25, "x_values": [0.0],
        })
        env_dir = tmp_path / "envout"
        monkeypatch.setenv("SHORTTIME_OUT_DIR", str(env_dir))
        code, _ = run(capsys, "flow", "--config", cfg)
        assert code == 0
        assert (env_dir / "flow.csv").exists()
