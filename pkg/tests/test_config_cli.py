import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from subcrit_cp import cli
from subcrit_cp.checks import CheckResult
from subcrit_cp.config import load_config, resolve_config
from subcrit_cp.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
TWO_STATE = {
    "group": {"model": "zd", "dim": 1}, "kernel": [[1, 1.0], [-1, 1.0]], "delta": 1.0, "caps": [2, 1],
    "mc": {"n": 2000, "t_grid": [2.0, 4.0], "seed": 3}, "delta_grid": [0.5, 1.0, 1.5],
    "eigenmeasure": {"survivors": 500}, "derivative": {"russo_n": 500, "russo_t": 2.0, "russo_s": [1.0]},
    "delta_c": {"bracket": [0.3, 1.2]},
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


class TestConfig:
    def test_defaults_filled(self):
        cfg = resolve_config({"kernel": {"1": 1.0}}, threads=1)
        assert cfg.resolved["caps"] == [6, 8]
        assert cfg.resolved["mc"]["threads"] == 1
        assert cfg.resolved["kernel"] == [[1, 1.0]]

    def test_overrides(self, tmp_path):
        cfg = load_config(write(tmp_path, TWO_STATE), seed=11, threads=2, out_dir=str(tmp_path / "o"))
        assert cfg.resolved["mc"]["seed"] == 11 and cfg.resolved["mc"]["threads"] == 2
        assert cfg.out_dir == tmp_path / "o"

    def test_free_product_normalized(self):
        cfg = resolve_config({"group": {"model": "free_product", "orders": [2, 2]},
                              "kernel": [["b", 1.0], ["a", 0.5]]}, threads=1)
        assert cfg.resolved["group"] == {"model": "free_product", "orders": [2, 2]}
        assert sorted(o for o, _ in cfg.resolved["kernel"]) == ["a", "b"]

    @pytest.mark.parametrize("doc", [
        [],
        {"unknown": 1},
        {"mc": {"speed": 3}},
        {"kernel": {"0": 1.0}},
        {"kernel": {"1": -1.0}},
        {"group": {"model": "lamplighter"}},
        {"delta": -0.5},
        {"caps": [0, 3]},
        {"caps": [3]},
        {"tol": 0},
        {"mc": {"t_grid": []}},
        {"derivative": {"russo_t": 2.0, "russo_s": [3.0]}},
        {"delta_c": {"method": "guess"}},
        {"delta_c": {"bracket": [2.0, 1.0]}},
    ])
    def test_invalid(self, doc):
        with pytest.raises(ConfigError):
            resolve_config(doc, threads=1)

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)

    @pytest.mark.parametrize("name", ["two_state.json", "line_nn.json", "tree.json"])
    def test_shipped_configs_resolve(self, name):
        load_config(ROOT / "configs" / name, threads=1)


class TestCli:
    @pytest.mark.parametrize("command", ["spectrum", "simulate", "growth", "eigenmeasure", "derivative",
                                         "sweep", "delta-c", "check"])
    def test_commands_succeed(self, tmp_path, capsys, command):
        cfg = write(tmp_path, TWO_STATE)
        out = tmp_path / "out"
        assert cli.main([command, "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
        doc = json.loads((out / f"{command}.json").read_text())
        assert doc["command"] == command
        assert set(doc) == {"command", "version", "backend", "config", "values", "provenance",
                            "wall_clock_s"}

    def test_spectrum_values(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["spectrum", "--config", write(tmp_path, TWO_STATE), "--out", str(out), "--threads", "1"])
        doc = json.loads((out / "spectrum.json").read_text())
        assert doc["values"]["forward"]["r_hat"] == pytest.approx((-7 + 17 ** 0.5) / 2, abs=1e-9)

    def test_sweep_columns(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["sweep", "--config", write(tmp_path, TWO_STATE), "--out", str(out), "--threads", "1"])
        header = (out / "sweep.csv").read_text().splitlines()[0].split(",")
        assert header == cli.SWEEP_COLUMNS + cli.AUDIT_COLUMNS

    def test_export_generator(self, tmp_path):
        out = tmp_path / "out"
        cfg = write(tmp_path, TWO_STATE)
        assert cli.main(["spectrum", "--config", cfg, "--out", str(out), "--threads", "1",
                         "--export-generator"]) == 0
        assert any(p.suffix == ".txt" for p in out.iterdir())

    def test_seed_reproducible(self, tmp_path):
        cfg = write(tmp_path, TWO_STATE)
        vals = []
        for d in ("a", "b"):
            cli.main(["growth", "--config", cfg, "--out", str(tmp_path / d), "--threads", "1", "--seed", "5"])
            vals.append(json.loads((tmp_path / d / "growth.json").read_text())["values"])
        assert vals[0] == vals[1]

    def test_exit_config_error(self, tmp_path):
        cfg = write(tmp_path, {"kernel": {"0": 1.0}})
        assert cli.main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_CONFIG == 1

    def test_exit_compute_error(self, tmp_path):
        cfg = write(tmp_path, dict(TWO_STATE, caps=[10, 14], max_states=1))
        assert cli.main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_COMPUTE == 2

    def test_exit_check_failure(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(cli, "run_checks", lambda *a, **kw: [CheckResult("forced", False, {})])
        cfg = write(tmp_path, TWO_STATE)
        assert cli.main(["check", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_CHECK == 3
        assert "FAIL forced" in capsys.readouterr().out

    def test_console_script(self, tmp_path):
        cfg = write(tmp_path, TWO_STATE)
        proc = subprocess.run([sys.executable, "-m", "subcrit_cp.cli", "spectrum", "--config", cfg,
                               "--out", str(tmp_path / "o")], capture_output=True, text=True,
                              env=dict(os.environ, PYTHONPATH=str(ROOT / "src")))
        assert proc.returncode == 0, proc.stderr
