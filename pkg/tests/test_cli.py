"""Tests for the command line, the tool server, settings and report I/O."""

import json
import math

import numpy as np
import pandas as pd
import pytest

import app
from hitrev import estimators
from hitrev.config import load_settings
from hitrev.errors import ConfigError, InputError, UsageError
from hitrev.io import dump_model, ingest_trajectory, load_model, report_csv, report_json, resolve_model, write_trajectory
from hitrev.model import Alphabet, Trajectory, cyclic_chain
from hitrev.server import HitrevServer


class RecordingServer:
    """Stands in for HitrevServer and returns a canned result."""

    def __init__(self, result):
        self.result = result
        self.calls = []

    def execute_tool(self, tool_name, parameters, cancel=None):
        self.calls.append((tool_name, parameters))
        return self.result


def decision(value):
    return {"report": estimators.TestReport(method="sign", statistic=0.0, p_value=0.5, decision=value, params={})}


@pytest.fixture(autouse=True)
def no_env_model(monkeypatch):
    monkeypatch.delenv("HITREV_MODEL", raising=False)


class TestParseArgs:
    """Subcommands, global flags and cross-flag rules."""

    def test_oracle(self):
        command = app.parse_args(["oracle", "--model", "m.json", "--scgf-grid", "41"])
        assert command.name == "oracle"
        assert command.options["scgf_grid"] == 41
        assert command.options["model"] == "m.json"
        assert command.flags.model == "m.json"

    def test_validate(self):
        command = app.parse_args(["validate", "--suite", "clt", "--n", "500", "--trials", "1000", "--seed", "7"])
        assert command.options["n"] == [500]
        assert command.options["trials"] == 1000
        assert command.options["seed"] == 7

    def test_validate_several_n(self):
        command = app.parse_args(["validate", "--suite", "consistency", "--n", "10", "20", "40"])
        assert command.options["n"] == [10, 20, 40]

    def test_waiting_estimate_without_model(self):
        with pytest.raises(UsageError):
            app.parse_args(["estimate", "--which", "W", "--n", "8", "--trajectory", "x.txt"])

    def test_waiting_estimate_from_files(self):
        command = app.parse_args(
            ["estimate", "--which", "W", "--n", "8", "--trajectory", "x.txt", "--target", "y.txt", "--alphabet", "a,b"]
        )
        assert command.options["target"] == "y.txt"

    def test_model_from_environment(self, monkeypatch):
        monkeypatch.setenv("HITREV_MODEL", "builtin:cyclic")
        assert app.parse_args(["oracle"]).name == "oracle"

    def test_oracle_needs_model(self):
        with pytest.raises(UsageError):
            app.parse_args(["oracle"])

    def test_target_needs_trajectory(self):
        with pytest.raises(UsageError):
            app.parse_args(["times", "--model", "builtin:cyclic", "--n", "3", "--target", "y.txt"])

    def test_unknown_flag(self):
        with pytest.raises(UsageError):
            app.parse_args(["oracle", "--model", "builtin:cyclic", "--bogus"])

    def test_missing_subcommand(self):
        with pytest.raises(UsageError):
            app.parse_args([])

    def test_global_flags_after_subcommand(self):
        command = app.parse_args(["simulate", "--length", "10", "--model", "builtin:iid2", "--out", "t.txt"])
        assert command.flags.out == "t.txt"
        assert command.options["out"] == "t.txt"
        assert command.options["length"] == 10

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            app.build_parser().parse_args(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip() == "hitrev 0.1.0 (model-hash: sha256-15g)"


class TestExitCodes:
    """Decisions and failures map to process exit codes."""

    ARGS = ["test", "--model", "builtin:cyclic", "--n", "4"]

    def test_no_evidence(self, capsys):
        server = RecordingServer(decision("no_evidence"))
        assert app.main(self.ARGS, server=server) == app.EXIT_OK
        name, parameters = server.calls[0]
        assert name == "test"
        assert parameters["method"] == "sign"
        assert parameters["pairs"] == 100
        assert json.loads(capsys.readouterr().out)["report"]["decision"] == "no_evidence"

    def test_reject(self):
        assert app.main(self.ARGS, server=RecordingServer(decision("reject_reversibility"))) == app.EXIT_REJECT

    def test_indeterminate(self):
        assert app.main(self.ARGS, server=RecordingServer(decision("indeterminate"))) == app.EXIT_INDETERMINATE

    def test_indeterminate_estimate(self, tmp_path, capsys):
        path = tmp_path / "short.txt"
        path.write_text("abcde\n")
        args = ["estimate", "--which", "H", "--trajectory", str(path), "--alphabet", "a,b,c,d,e", "--n", "2"]
        assert app.main(args) == app.EXIT_INDETERMINATE
        assert json.loads(capsys.readouterr().out)["report"]["indeterminate"] is True

    def test_determinate_estimate(self, tmp_path):
        path = tmp_path / "loop.txt"
        path.write_text("abbaab\n")
        args = ["estimate", "--which", "H", "--trajectory", str(path), "--alphabet", "a,b", "--n", "2"]
        assert app.main(args) == app.EXIT_OK

    def test_tool_error(self):
        assert app.main(self.ARGS, server=RecordingServer({"error": "Unknown tool: test"})) == app.EXIT_USAGE

    def test_usage_error(self, capsys):
        assert app.main(["estimate", "--n", "4"]) == app.EXIT_USAGE
        assert "needs --model" in capsys.readouterr().err

    def test_bad_config_value(self):
        assert app.main(self.ARGS + ["--seed", "-1"], server=RecordingServer(decision("no_evidence"))) == app.EXIT_USAGE

    def test_degenerate_variance(self):
        args = ["validate", "--model", "builtin:symmetric3", "--suite", "clt", "--n", "4", "--trials", "100"]
        assert app.main(args) == app.EXIT_NUMERIC

    def test_invalid_suite_configuration(self):
        assert app.main(["validate", "--suite", "clt", "--n", "1"]) == app.EXIT_USAGE


class TestEndToEnd:
    """Whole commands against builtin models and small files."""

    def test_estimate_json(self, tmp_path):
        out = tmp_path / "estimate.json"
        assert app.main(["estimate", "--model", "builtin:cyclic", "--n", "6", "--seed", "3", "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["report"]["estimator"] == "H"
        assert data["mep"] == pytest.approx(0.25 * math.log(2.0), abs=1e-12)
        assert data["settings"]["seed"] == 3

    def test_estimate_is_reproducible(self, tmp_path):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for path in paths:
            app.main(["estimate", "--which", "W", "--model", "builtin:cyclic", "--n", "5", "--out", str(path)])
        assert paths[0].read_text() == paths[1].read_text()

    def test_oracle_csv(self, tmp_path):
        out = tmp_path / "scgf.csv"
        args = ["oracle", "--model", "builtin:cyclic", "--scgf-grid", "11", "--format", "csv", "--out", str(out)]
        assert app.main(args) == 0
        table = pd.read_csv(out)
        assert list(table.columns) == ["p", "value", "derivative"]
        assert len(table) == 11

    def test_simulate_then_estimate_from_file(self, tmp_path):
        path = tmp_path / "traj.txt"
        assert app.main(["simulate", "--model", "builtin:cyclic", "--length", "2000", "--out", str(path)]) == 0
        assert len(path.read_text().strip()) == 2000

        out = tmp_path / "estimate.json"
        args = ["estimate", "--trajectory", str(path), "--alphabet", "a,b,c", "--n", "4", "--out", str(out)]
        assert app.main(args) == 0
        data = json.loads(out.read_text())
        assert data["report"]["caps_used"] <= 1996
        assert data["plugin_mep"] >= 0.0

    def test_threshold_on_file(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("abc" * 40 + "\n")
        args = ["test", "--method", "threshold", "--trajectory", str(path), "--alphabet", "a,b,c", "--n", "3"]
        assert app.main(args + ["--cap", "100"]) == app.EXIT_INDETERMINATE


class TestServer:
    """Tool registry and direct tool calls."""

    def test_tool_names(self):
        names = [tool["name"] for tool in HitrevServer().list_tools()]
        assert names == ["simulate", "times", "estimate", "oracle", "validate", "test"]

    def test_unknown_tool(self):
        assert HitrevServer().execute_tool("forecast", {}) == {"error": "Unknown tool: forecast"}

    def test_times_from_file(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("abcabcabc\n")
        result = HitrevServer().execute_tool("times", {"n": 2, "trajectory": str(path), "alphabet": "a,b,c"})
        plus, minus = result["records"]
        assert plus.value == 3
        assert minus.censored
        assert list(result["table"]["kind"]) == ["return", "hit"]

    def test_clamped_cap_is_reported(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("abc" * 40 + "\n")
        result = HitrevServer(load_settings(cap=10**8)).estimate(
            {"n": 3, "trajectory": str(path), "alphabet": "a,b,c"}
        )
        assert result["report"].caps_used == 117

    def test_file_needs_alphabet(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("abc\n")
        with pytest.raises(UsageError):
            HitrevServer().estimate({"n": 1, "trajectory": str(path)})

    def test_simulate_returns_text(self):
        result = HitrevServer().execute_tool("simulate", {"model": "builtin:iid2", "length": 12, "seed": 4})
        assert len(result["trajectory"]) == 12
        assert set(result["trajectory"]) <= {"a", "b"}


class TestSettings:
    """Layered configuration."""

    def test_defaults(self, monkeypatch):
        for name in ("SEED", "CAP", "ALPHA", "FORMAT"):
            monkeypatch.delenv(f"HITREV_{name}", raising=False)
        settings = load_settings()
        assert settings.seed == 0
        assert settings.cap == 10**8
        assert settings.alpha == 0.05
        assert settings.format == "json"

    def test_layering(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HITREV_SEED", "5")
        monkeypatch.setenv("HITREV_ALPHA", "0.01")
        config = tmp_path / "hitrev.env"
        config.write_text("HITREV_SEED=6\nHITREV_LOG_LEVEL=debug\n")
        settings = load_settings(str(config), seed=7)
        assert settings.seed == 7
        assert settings.alpha == 0.01
        assert settings.log_level == "DEBUG"

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_settings(str(tmp_path / "absent.env"))

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            load_settings(alpha=1.5)


class TestIO:
    """Trajectory files, model files and report serialization."""

    def test_one_token_per_line(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("a\nb\na\n")
        assert ingest_trajectory(str(path), Alphabet(("a", "b"))).symbols.tolist() == [0, 1, 0]

    def test_bad_token_reports_line(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("a\nb\nz\n")
        with pytest.raises(InputError) as exc:
            ingest_trajectory(str(path), Alphabet(("a", "b")))
        assert exc.value.line == 3

    def test_compact_line(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("abba\n")
        assert ingest_trajectory(str(path), Alphabet(("a", "b"))).symbols.tolist() == [0, 1, 1, 0]

    def test_compact_bad_token_reports_offset(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("abza\n")
        with pytest.raises(InputError) as exc:
            ingest_trajectory(str(path), Alphabet(("a", "b")))
        assert exc.value.offset == 3

    def test_multi_character_tokens(self, tmp_path):
        alphabet = Alphabet(("up", "down"))
        path = tmp_path / "traj.txt"
        write_trajectory(Trajectory(np.array([1, 0, 0], dtype=np.uint8)), alphabet, str(path))
        assert path.read_text() == "down\nup\nup\n"
        assert ingest_trajectory(str(path), alphabet).symbols.tolist() == [1, 0, 0]

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            ingest_trajectory(str(tmp_path / "absent.txt"), Alphabet(("a", "b")))

    def test_model_file(self, tmp_path):
        path = tmp_path / "model.json"
        model = cyclic_chain(0.5, 0.25)
        dump_model(model, str(path))
        loaded = load_model(str(path))
        np.testing.assert_allclose(loaded.transitions, model.transitions, atol=0)
        assert loaded.model_id == model.model_id

    def test_unknown_builtin(self):
        with pytest.raises(InputError):
            resolve_model("builtin:nope")

    def test_non_finite_floats_become_null(self):
        assert json.loads(report_json({"x": math.inf, "y": [1.5, math.nan]})) == {"x": None, "y": [1.5, None]}

    def test_csv_header_first(self):
        text = report_csv(pd.DataFrame({"n": [4, 8], "value": [0.5, 0.25]}))
        assert text.splitlines()[0] == "n,value"
