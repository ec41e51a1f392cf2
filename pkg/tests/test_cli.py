import json

import pandas as pd
import pytest

from orchestration.cli import main


@pytest.fixture
def config_file(smoke_config, tmp_path):
    path = tmp_path / "smoke.json"
    path.write_text(json.dumps(smoke_config.model_dump(mode="json")))
    return path


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


def test_verify_identities_passes(capsys):
    assert main(["verify-identities", "--resolutions", "16", "--samples", "10"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_run_reports_unguaranteed_bound(config_file, out):
    code = main(["run", "--config", str(config_file), "--replicas", "1", "--out", str(out), "--seed", "3"])
    # full observation of Lorenz 63 cannot meet the forcing-driven lower condition at beta/sigma^2 = 50
    assert code == 2
    summaries = list(out.rglob("summary.json"))
    assert len(summaries) == 1
    summary = json.loads(summaries[0].read_text())
    assert summary["status"] == "BOUND_NOT_GUARANTEED"
    assert len(summary["replicas"]) == 1


def test_malformed_config_is_a_usage_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"observation": {"sigma": 0.0}}))
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", str(bad)])
    assert exc.value.code == 2


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_calibrate_writes_constants(config_file, out, capsys):
    code = main(["calibrate", "--config", str(config_file), "--out", str(out)])
    assert code == 2
    cal_dirs = list(out.glob("*_calibration"))
    assert len(cal_dirs) == 1
    assert (cal_dirs[0] / "calibration.json").exists()
    assert (cal_dirs[0] / "bound_report.json").exists()
    assert "guaranteed" in capsys.readouterr().out


def test_sweep_creates_one_directory_per_value(config_file, out):
    code = main(["sweep", "--config", str(config_file), "--replicas", "1", "--out", str(out),
                 "--param", "beta", "--values", "0.5,0.25"])
    assert code == 2
    root = out / "smoke_beta"
    assert (root / "beta_0.5" / "summary.json").exists()
    assert (root / "beta_0.25" / "summary.json").exists()
    table = pd.read_csv(root / "sweep.csv")
    assert sorted(table["param:beta"]) == [0.25, 0.5]


def test_threshold_values_only_for_inflation(config_file, out):
    with pytest.raises(SystemExit):
        main(["sweep", "--config", str(config_file), "--out", str(out), "--param", "beta",
              "--values", "2*threshold"])


def test_report_collects_summaries(config_file, out):
    main(["run", "--config", str(config_file), "--replicas", "1", "--out", str(out)])
    assert main(["report", "--dir", str(out)]) == 0
    table = pd.read_csv(out / "report.csv")
    assert len(table) == 1
    assert table["label"][0] == "smoke"


def test_report_requires_a_directory(tmp_path):
    with pytest.raises(SystemExit):
        main(["report", "--dir", str(tmp_path / "missing")])
