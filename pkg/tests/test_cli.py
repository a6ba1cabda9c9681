import filecmp

import pandas as pd
import pytest
import yaml

from ivsforecast import __version__, cli
from ivsforecast.cli import DEFAULT_CONFIG, EXIT_COMPUTE, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from ivsforecast.errors import RankDeficient

RUN_FILES = (
    "forecasts.csv",
    "scores.csv",
    "rmse.csv",
    "rmspe.csv",
    "mape.csv",
    "ssr.csv",
    "rmse_ratio.csv",
    "mcs_h1.csv",
    "diagnostics.csv",
    "gaps.csv",
    "frozen_parameters.csv",
    "manifest.yaml",
)


def write_config(tmp_path, name="cfg.yaml", **overrides):
    cfg = {
        "seed": 7,
        "output_dir": str(tmp_path / "out"),
        "data": {"synthetic": {"n_days": 100, "quotes_per_day": 30, "model": "CT", "noise_sd": 0.005}},
        "filters": {"liquidity": None},
        "rolling": {"window_len": 60, "n_oos": 10, "horizons": [1], "models": ["GG-RW", "CT-RW"]},
        "mcs": {"n_boot": 200},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp)
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    return tmp / "out"


# generate


def test_generate_writes_panels_and_truth(tmp_path):
    cfg = write_config(tmp_path, data={"synthetic": {"n_days": 12, "quotes_per_day": 9}})
    assert main(["generate", "--config", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    panels = pd.read_csv(out / "panels.csv")
    truth = pd.read_csv(out / "truth.csv")
    assert len(panels) == 12 * 9
    assert len(truth) == 12
    assert (out / "manifest.yaml").is_file()


def test_generate_is_byte_reproducible(tmp_path):
    cfg = write_config(tmp_path, data={"synthetic": {"n_days": 12, "quotes_per_day": 9}})
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("panels.csv", "truth.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_generate_zero_days_is_config_error(tmp_path):
    cfg = write_config(tmp_path, data={"synthetic": {"n_days": 0}})
    assert main(["generate", "--config", str(cfg)]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


# run


def test_run_writes_every_output(run_dir):
    for name in RUN_FILES:
        assert (run_dir / name).is_file(), name
    rec = pd.read_csv(run_dir / "forecasts.csv")
    assert set(rec["model"]) == {"GG-RW", "CT-RW"}
    assert rec["origin_date"].nunique() == 10
    manifest = yaml.safe_load((run_dir / "manifest.yaml").read_text())
    assert manifest["seed"] == 7 and manifest["library_version"] == __version__
    assert manifest["command"] == "run"


def test_manifest_replay_is_identical(run_dir, tmp_path):
    replay = tmp_path / "replay"
    assert main(["run", "--config", str(run_dir / "manifest.yaml"), "--out", str(replay)]) == EXIT_OK
    for name in RUN_FILES:
        if name == "manifest.yaml":
            continue
        assert filecmp.cmp(run_dir / name, replay / name, shallow=False), name


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "flags"
    args = ["run", "--config", str(cfg), "--out", str(out), "--seed", "3", "--models", "GG-RW", "--threads", "2"]
    assert main(args) == EXIT_OK
    manifest = yaml.safe_load((out / "manifest.yaml").read_text())
    assert manifest["seed"] == 3 and manifest["threads"] == 2
    assert manifest["rolling"]["models"] == ["GG-RW"]
    # one model: placeholder MCS table with no verdict
    mcs = pd.read_csv(out / "mcs_h1.csv")
    assert list(mcs["model"]) == ["GG-RW"] and mcs["p_value"].isna().all()


def test_unknown_model_is_config_error(tmp_path):
    cfg = write_config(tmp_path, rolling={"models": ["GG-RW", "XX-RW"]})
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize(
    "override",
    [
        {"seed": None},
        {"unknown_section": 1},
        {"mcs": {"alpha": 0.9}},
        {"evaluation": {"metrics": ["mse"]}},
        {"filters": {"liquidity": {"bogus": 1}}},
    ],
)
def test_invalid_configs(tmp_path, override):
    cfg = write_config(tmp_path, **override)
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("seed: [1,\n", encoding="utf-8")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG


def test_missing_csv_is_data_error(tmp_path):
    cfg = write_config(tmp_path, data={"source": "csv", "csv": str(tmp_path / "nope.csv")})
    assert main(["run", "--config", str(cfg)]) == EXIT_DATA
    assert not (tmp_path / "out").exists()


def test_too_short_history_is_data_error(tmp_path):
    cfg = write_config(tmp_path, rolling={"window_len": 95, "n_oos": 10})
    assert main(["run", "--config", str(cfg)]) == EXIT_DATA
    assert not (tmp_path / "out").exists()


def test_numerical_failure_is_compute_error(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise RankDeficient("design matrix lost rank")

    monkeypatch.setattr(cli.harness, "run_rolling", broken)
    cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg)]) == EXIT_COMPUTE
    assert not (tmp_path / "out").exists()


def test_run_from_generated_csv(tmp_path):
    gen = write_config(tmp_path, "gen.yaml", data={"synthetic": {"n_days": 70, "quotes_per_day": 25, "model": "GG", "mean": [0.25, 0.0, 0.8, 0.0, -0.05]}})
    assert main(["generate", "--config", str(gen), "--out", str(tmp_path / "g")]) == EXIT_OK
    cfg = write_config(
        tmp_path,
        data={"source": "csv", "csv": str(tmp_path / "g" / "panels.csv")},
        rolling={"window_len": 60, "n_oos": 5, "models": ["GG-RW", "GG-AR"]},
    )
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    assert pd.read_csv(tmp_path / "out" / "forecasts.csv")["origin_date"].nunique() == 5


def test_inputs_are_not_mutated(tmp_path):
    cfg = write_config(tmp_path)
    before = cfg.read_bytes()
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    assert cfg.read_bytes() == before


def test_fit_writes_coefficients(tmp_path):
    cfg = write_config(tmp_path, data={"synthetic": {"n_days": 15, "quotes_per_day": 30}})
    assert main(["fit", "--config", str(cfg)]) == EXIT_OK
    coef = pd.read_csv(tmp_path / "out" / "coefficients.csv")
    assert len(coef) == 2 * 15
    assert len(pd.read_csv(tmp_path / "out" / "lambda_stage1.csv")) == 15


# evaluate, mcs, report


def test_evaluate_reproduces_run_tables(run_dir, tmp_path):
    assert main(["evaluate", str(run_dir), "--out", str(tmp_path / "ev")]) == EXIT_OK
    for name in ("scores.csv", "rmse.csv", "rmse_ratio.csv"):
        assert filecmp.cmp(run_dir / name, tmp_path / "ev" / name, shallow=False), name


def test_mcs_reproduces_run_tables(run_dir, tmp_path):
    assert main(["mcs", str(run_dir), "--out", str(tmp_path / "m")]) == EXIT_OK
    assert filecmp.cmp(run_dir / "mcs_h1.csv", tmp_path / "m" / "mcs_h1.csv", shallow=False)
    assert main(["mcs", str(run_dir), "--out", str(tmp_path / "m2"), "--n-boot", "300", "--alpha", "0.1"]) == EXIT_OK
    assert len(pd.read_csv(tmp_path / "m2" / "mcs_h1.csv")) == 2


def test_report_best_column(run_dir, tmp_path):
    target = tmp_path / "rep"
    assert main(["report", str(run_dir), "--out", str(target)]) == EXIT_OK
    long = pd.read_csv(target / "report_long.csv")
    assert list(long.columns) == ["model", "h", "commodity", "metric", "value", "best"]
    assert len(long) == 2 * 1 * len(DEFAULT_CONFIG["evaluation"]["metrics"])
    for (h, metric), grp in long.groupby(["h", "metric"]):
        pick = grp["value"].idxmax() if metric == "ssr" else grp["value"].idxmin()
        assert grp.loc[pick, "best"]
        assert grp["best"].sum() >= 1
    assert (target / "rmse_table.csv").is_file()
    assert "model confidence set" in (target / "report.txt").read_text()


def test_report_single_model(tmp_path):
    cfg = write_config(tmp_path, rolling={"models": ["CT-RW"]})
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    assert main(["report", str(tmp_path / "out")]) == EXIT_OK
    table = pd.read_csv(tmp_path / "out" / "report" / "rmse_table.csv")
    assert len(table) == 1
    assert pd.read_csv(tmp_path / "out" / "report" / "report_long.csv")["best"].all()


def test_report_of_report_dir_is_no_run(run_dir, tmp_path):
    target = tmp_path / "rep"
    assert main(["report", str(run_dir), "--out", str(target)]) == EXIT_OK
    assert main(["report", str(target)]) == EXIT_DATA
    assert main(["evaluate", str(tmp_path / "empty")]) == EXIT_DATA
