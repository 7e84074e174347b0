import json

import pytest

from opttomo.cli import main


@pytest.fixture
def rates_config(tmp_path):
    payload = {
        "kind": "rates",
        "n_cells": 48,
        "n_ordinates": 8,
        "epsilons": [0.4, 0.3, 0.2, 0.1],
        "measurement": {
            "detectors": [[0.0], [1.0]],
            "traces": [{"kind": "linear", "axis": 0, "value": 1.0}],
            "noise_std": 0.05,
        },
        "seeds": {"master": 11, "noise": 12},
        "out_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "rates.json"
    path.write_text(json.dumps(payload))
    return path


class TestCli:
    def test_rates_run(self, rates_config, tmp_path, capsys):
        code = main(["rates", "--config", str(rates_config)])
        assert code == 0
        out = capsys.readouterr().out
        assert "rates: fingerprint" in out
        assert "r0: slope" in out
        assert (tmp_path / "out" / "rates_summary.json").exists()

    def test_refine_flag(self, rates_config, tmp_path):
        assert main(["rates", "--config", str(rates_config),
                     "--refine"]) == 0
        assert (tmp_path / "out" / "refine_guard.json").exists()

    def test_out_override(self, rates_config, tmp_path):
        other = tmp_path / "elsewhere"
        assert main(["rates", "--config", str(rates_config),
                     "--out", str(other)]) == 0
        assert (other / "rates.csv").exists()
        assert not (tmp_path / "out").exists()

    def test_seed_override_changes_fingerprint(self, rates_config,
                                               tmp_path):
        main(["rates", "--config", str(rates_config)])
        base = json.loads(
            (tmp_path / "out" / "report.json").read_text())["fingerprint"]
        other = tmp_path / "seeded"
        main(["rates", "--config", str(rates_config),
              "--out", str(other), "--seed", "999"])
        seeded = json.loads(
            (other / "report.json").read_text())["fingerprint"]
        assert seeded != base

    def test_forward_run(self, rates_config, tmp_path, capsys):
        payload = json.loads(rates_config.read_text())
        payload["kind"] = "forward"
        cfg = tmp_path / "fwd.json"
        cfg.write_text(json.dumps(payload))
        assert main(["forward", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "forward_rte.csv").exists()
        assert "forward: fingerprint" in capsys.readouterr().out

    def test_schema_error_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"kind": "rates",
                                   "epsilons": [0.1, 0.2, 0.3, 0.4]}))
        assert main(["rates", "--config", str(bad)]) == 2
        assert "config error:" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["rates", "--config",
                     str(tmp_path / "absent.json")]) == 2
        assert "cannot read" in capsys.readouterr().err

    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate", "--config", "x.json"])

    def test_command_is_required(self):
        with pytest.raises(SystemExit):
            main([])
