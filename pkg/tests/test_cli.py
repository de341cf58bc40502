"""
Test suite for the gridprice command line.
"""

import json

import pytest

from main import _normalize_argv, build_parser, main
from tests.grids import two_bus_text


def run(*argv):
    return main([str(a) for a in argv])


@pytest.mark.unit
class TestArguments:
    """Test argument handling."""

    def test_negative_range_is_accepted(self):
        """Test that a range starting with a minus sign parses."""
        args = build_parser().parse_args(_normalize_argv(["generate", "--range", "-30:30"]))

        assert args.s_grid_range == [-30.0, 30.0]

    def test_unknown_test_case(self, case30_path):
        """Test that test case 5 is a usage error with exit code 1."""
        with pytest.raises(SystemExit) as excinfo:
            run("generate", "--grid", case30_path, "--test-case", 5)

        assert excinfo.value.code == 1

    def test_missing_command(self):
        """Test that a bare invocation is a usage error."""
        with pytest.raises(SystemExit) as excinfo:
            run()

        assert excinfo.value.code == 1

    def test_missing_grid(self, output_dir):
        """Test that a config without a grid is rejected."""
        assert run("generate", "--out", output_dir, "--n", 2) == 1

    def test_unknown_model(self, case30_path, output_dir):
        """Test that an unknown model name is rejected."""
        assert run("train", "--grid", case30_path, "--models", "SVR", "--out", output_dir) == 1


@pytest.mark.unit
class TestParseCommand:
    """Test the parse subcommand."""

    def test_summary(self, case30_path, capsys):
        """Test the one-line summary of case30."""
        assert run("parse", case30_path) == 0

        assert capsys.readouterr().out.strip() == "30 buses, 6 generators, 41 branches"

    def test_json(self, case30_path, capsys):
        """Test the machine-readable summary."""
        assert run("parse", case30_path, "--json") == 0

        summary = json.loads(capsys.readouterr().out)
        assert summary["buses"] == 30
        assert summary["valid"] is True
        assert len(summary["hash"]) == 64

    def test_unparseable(self, tmp_path):
        """Test that a broken file exits with the data error code."""
        path = tmp_path / "broken.m"
        path.write_text("mpc.bus = [\n  1 3 x;\n];\n", encoding="utf-8")

        assert run("parse", path) == 2

    def test_missing_file(self, tmp_path):
        """Test that a missing file exits with the data error code."""
        assert run("parse", tmp_path / "absent.m") == 2

    def test_invalid_grid(self, tmp_path, capsys):
        """Test that a structurally invalid grid is reported."""
        path = tmp_path / "bad.m"
        path.write_text(two_bus_text().replace("0.1\t0\t100", "-0.1\t0\t100"), encoding="utf-8")

        assert run("parse", path) == 2
        assert "reactance" in capsys.readouterr().err


@pytest.mark.integration
class TestWorkflow:
    """Test generate, train and evaluate end to end on case30."""

    def test_generate_is_deterministic(self, case30_path, tmp_path):
        """Test that equal seeds write byte-identical datasets."""
        for name in ("a", "b"):
            assert run(
                "generate", "--grid", case30_path, "--n", 6, "--range", "-10:10",
                "--seed", 3, "--out", tmp_path / name,
            ) == 0

        for suffix in ("features.csv", "targets.csv"):
            a = (tmp_path / "a" / f"dataset_{suffix}").read_bytes()
            b = (tmp_path / "b" / f"dataset_{suffix}").read_bytes()
            assert a == b
        assert (tmp_path / "a" / "effective_config.json").exists()

    def test_test_case_uses_derived_seed(self, case30_path, tmp_path):
        """Test that a contingency dataset differs from the base dataset."""
        common = ["--grid", case30_path, "--n", 4, "--range", "-10:10", "--seed", 3]
        assert run("generate", *common, "--out", tmp_path / "base") == 0
        assert run("generate", *common, "--test-case", 2, "--out", tmp_path / "derate") == 0

        meta = json.loads((tmp_path / "derate" / "dataset_meta.json").read_text(encoding="utf-8"))
        assert meta["config"]["test_case"] == 2
        assert meta["config"]["seed"] != 3

    def test_train_then_evaluate(self, case30_path, tmp_path):
        """Test that saved models are scored on a saved test dataset."""
        data = tmp_path / "data"
        common = ["--grid", case30_path, "--range", "-10:10"]
        assert run("generate", *common, "--n", 30, "--stem", "train", "--out", data) == 0
        assert run("generate", *common, "--n", 5, "--test-case", 2, "--stem", "test", "--out", data) == 0

        out = tmp_path / "run"
        assert run(
            "train", *common, "--data", data, "--stem", "train", "--models", "DTR,RFR", "--out", out
        ) == 0
        assert sorted(p.name for p in (out / "models").glob("*.npz")) == ["DTR.npz", "RFR.npz"]

        assert run(
            "evaluate", *common, "--model-dir", out / "models", "--data", data,
            "--stems", "test", "--out", out,
        ) == 0
        report = json.loads((out / "eval_report.json").read_text(encoding="utf-8"))
        assert [m["model"] for m in report["models"]] == ["DTR", "RFR"]
        assert report["models"][0]["results"][0]["test_case"] == "derate10"
        assert (out / "eval_report.csv").exists()

    def test_pipeline_is_reproducible(self, case30_path, tmp_path):
        """Test that generate, train and evaluate twice with one seed give equal reports."""
        config = tmp_path / "run.json"
        config.write_text(
            json.dumps(
                {
                    "models": ["DTR", "GBR", "NN-1"],
                    "hyper_overrides": {
                        "GBR": {"n_estimators": 15, "subsample": 0.5},
                        "NN-1": {"max_epochs": 15},
                    },
                }
            ),
            encoding="utf-8",
        )
        common = ["--config", config, "--grid", case30_path, "--range", "-10:10", "--seed", 11]

        reports = []
        for name in ("first", "second"):
            data, out = tmp_path / name / "data", tmp_path / name / "run"
            assert run("generate", *common, "--n", 40, "--stem", "train", "--out", data) == 0
            assert run("generate", *common, "--n", 6, "--test-case", 3, "--stem", "test", "--out", data) == 0
            assert run("train", *common, "--data", data, "--stem", "train", "--out", out) == 0
            assert run(
                "evaluate", *common, "--model-dir", out / "models", "--data", data,
                "--stems", "test", "--out", out,
            ) == 0
            reports.append(json.loads((out / "eval_report.json").read_text(encoding="utf-8")))

        first, second = reports
        assert [m["model"] for m in first["models"]] == ["DTR", "GBR", "NN-1"]
        assert first["models"][0]["results"][0]["test_case"] == "line_out"
        for a, b in zip(first["models"], second["models"]):
            assert a["results"][0]["mape_per_repeat"] == b["results"][0]["mape_per_repeat"]
        assert first == second

    def test_evaluate_without_models(self, case30_path, tmp_path):
        """Test that an empty model directory is a data error."""
        (tmp_path / "models").mkdir()

        assert run(
            "evaluate", "--grid", case30_path, "--model-dir", tmp_path / "models",
            "--data", tmp_path, "--out", tmp_path,
        ) == 2

    def test_bench_needs_instances(self, case30_path, output_dir):
        """Test that an empty benchmark is refused."""
        assert run("bench", "--grid", case30_path, "--n", 0, "--models", "DTR", "--out", output_dir) == 1
