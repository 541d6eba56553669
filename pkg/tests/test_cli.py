import json

import pytest

from quantbess.cli import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    MANIFEST_FILE,
    REPORT_DIR_ENV,
    build_config,
    main,
    read_config_file,
)
from quantbess.errors import ConfigError

SMALL_CONFIG = """\
# fast experiment for CLI tests
point_window = 56
prob_window = 8
metric_window = 5
alphas = 0.5, 0.8
pool_window_lengths = 30, 56
model_registry = hs, cp
"""


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "series.csv"
    assert main(["synth", str(path), "--days", "90", "--seed", "11"]) == EXIT_OK
    return path


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.cfg"
    path.write_text(SMALL_CONFIG)
    return path


@pytest.fixture(scope="module")
def report_dir(dataset, config_file, tmp_path_factory):
    outdir = tmp_path_factory.mktemp("report")
    code = main([
        "backtest", "--data", str(dataset), "--config", str(config_file),
        "--output", str(outdir),
    ])
    assert code == EXIT_OK
    return outdir


class TestConfigParsing:
    def test_round_trip(self, config_file):
        values = read_config_file(config_file)
        config = build_config(values)
        assert config.point_window == 56
        assert config.alphas == (0.5, 0.8)
        assert config.model_registry == ("hs", "cp")

    def test_all_problems_listed(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("point_window = soon\nunknown_key = 1\n")
        with pytest.raises(ConfigError) as err:
            build_config(read_config_file(path))
        assert len(err.value.problems) == 2

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "noequals.cfg"
        path.write_text("just some text\n")
        with pytest.raises(ConfigError):
            read_config_file(path)

    def test_bandwidth_auto(self):
        config = build_config({"bandwidth": "auto"})
        assert config.bandwidth is None
        assert build_config({"bandwidth": "2.5"}).bandwidth == 2.5

    def test_seed_override(self):
        assert build_config({}, seed_override=7).seed == 7


class TestSynthAndIngest:
    def test_synth_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["synth", str(a), "--days", "4", "--seed", "3"]) == EXIT_OK
        assert main(["synth", str(b), "--days", "4", "--seed", "3"]) == EXIT_OK
        assert a.read_text() == b.read_text()

    def test_ingest_idempotent(self, dataset, tmp_path, capsys):
        out1 = tmp_path / "norm1.csv"
        out2 = tmp_path / "norm2.csv"
        assert main(["ingest", str(dataset), str(out1)]) == EXIT_OK
        assert main(["ingest", str(out1), str(out2)]) == EXIT_OK
        assert out1.read_text() == out2.read_text()
        assert "90 days" in capsys.readouterr().out

    def test_corrupt_file_reports_line(self, tmp_path, capsys):
        path = tmp_path / "corrupt.csv"
        path.write_text("timestamp,price,load_forecast\n2021-01-01T00:00:00,oops,1\n")
        code = main(["ingest", str(path), str(tmp_path / "out.csv")])
        assert code == EXIT_RUNTIME
        assert "line 2" in capsys.readouterr().err

    def test_missing_input(self, tmp_path, capsys):
        code = main(["ingest", str(tmp_path / "nope.csv"), str(tmp_path / "out.csv")])
        assert code == EXIT_USAGE


class TestBacktest:
    def test_report_bundle(self, report_dir):
        manifest = json.loads((report_dir / MANIFEST_FILE).read_text())
        assert manifest["seed"] == 0
        assert set(manifest["files"]) == {
            "profits_by_metric.csv", "selection_log.csv",
            "metric_table.csv", "ledgers.csv",
        }
        profits = (report_dir / "profits_by_metric.csv").read_text().strip().splitlines()
        assert len(profits) == 1 + 6 * 2  # header + metrics x alphas

    def test_missing_dataset_exit_2(self, tmp_path, capsys):
        code = main(["backtest", "--data", str(tmp_path / "none.csv")])
        assert code == EXIT_USAGE
        assert "not found" in capsys.readouterr().err

    def test_invalid_config_exit_2(self, dataset, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("metric_window = 0\nalphas = 0.85\n")
        code = main(["backtest", "--data", str(dataset), "--config", str(cfg)])
        assert code == EXIT_USAGE
        err = capsys.readouterr().err
        assert "metric_window" in err and "0.85" in err

    def test_seed_override_changes_manifest(self, dataset, config_file, report_dir, tmp_path):
        outdir = tmp_path / "seeded"
        code = main([
            "backtest", "--data", str(dataset), "--config", str(config_file),
            "--output", str(outdir), "--seed", "99",
        ])
        assert code == EXIT_OK
        base = json.loads((report_dir / MANIFEST_FILE).read_text())
        seeded = json.loads((outdir / MANIFEST_FILE).read_text())
        assert seeded["seed"] == 99
        assert seeded != base

    def test_env_var_overrides_output(self, dataset, config_file, tmp_path, monkeypatch):
        outdir = tmp_path / "via_env"
        monkeypatch.setenv(REPORT_DIR_ENV, str(outdir))
        code = main([
            "backtest", "--data", str(dataset), "--config", str(config_file),
            "--output", str(tmp_path / "ignored"),
        ])
        assert code == EXIT_OK
        assert (outdir / MANIFEST_FILE).exists()


class TestSingle:
    def test_single_model_run(self, dataset, config_file, tmp_path, capsys):
        ledger_path = tmp_path / "ledger.csv"
        code = main([
            "single", "--data", str(dataset), "--config", str(config_file),
            "--model", "hs", "--alpha", "0.8", "--output", str(ledger_path),
        ])
        assert code == EXIT_OK
        assert "profit_per_mwh=" in capsys.readouterr().out
        assert ledger_path.exists()

    def test_benchmark_run(self, dataset, config_file, capsys):
        code = main([
            "single", "--data", str(dataset), "--config", str(config_file),
            "--model", "benchmark",
        ])
        assert code == EXIT_OK
        assert "model=benchmark" in capsys.readouterr().out


class TestReport:
    def test_summary_table(self, report_dir, capsys):
        assert main(["report", str(report_dir)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "best metric" in out
        assert "0.50" in out and "0.80" in out

    def test_tampered_csv_warns(self, report_dir, capsys):
        path = report_dir / "profits_by_metric.csv"
        original = path.read_text()
        try:
            path.write_text(original + "0.5,pinball_all,999.0\n")
            assert main(["report", str(report_dir)]) == EXIT_OK
            assert "checksum mismatch" in capsys.readouterr().err
        finally:
            path.write_text(original)

    def test_empty_directory(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == EXIT_USAGE

    def test_missing_directory(self, tmp_path):
        assert main(["report", str(tmp_path / "ghost")]) == EXIT_USAGE
