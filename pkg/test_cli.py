"""
End-to-end tests of the command-line interface on a small config.
"""
import json

import pandas as pd
import pytest
import yaml

from src.experiment_config import load_config
from src.main import main


@pytest.fixture
def config_path(tmp_path, small_config_dict):
    small_config_dict["sla"] = {"reference_policy": "best_fit", "reference_intervals": 20}
    small_config_dict["output"] = {"directory": str(tmp_path / "results"),
                                   "dataset_file": str(tmp_path / "results" / "dataset.jsonl"),
                                   "model_file": str(tmp_path / "models" / "metanet.bin")}
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(small_config_dict))
    return str(path)


def test_run_static_selector(tmp_path, config_path):
    prefix = str(tmp_path / "out" / "static")
    assert main(["run", "--config", config_path, "--selector", "static:round_robin", "--intervals", "4",
                 "--report", prefix, "--trace", str(tmp_path / "out" / "trace.jsonl")]) == 0
    df = pd.read_csv(prefix + ".csv")
    assert len(df) == 4 and set(df["policy"]) == {"round_robin"}
    with open(prefix + "_summary.json") as f:
        assert "total_objective" in json.load(f)
    assert (tmp_path / "out" / "trace.jsonl").exists()


def test_metanet_without_model_fails(tmp_path, config_path):
    assert main(["run", "--config", config_path, "--selector", "metanet"]) == 1
    assert main(["run", "--config", config_path, "--selector", "metanet",
                 "--model", str(tmp_path / "missing.bin")]) == 1


def test_unknown_selector_fails(config_path):
    assert main(["run", "--config", config_path, "--selector", "oracle", "--intervals", "2"]) == 1


def test_usage_errors_exit_with_two():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["train", "--ablation", "bogus"])


@pytest.mark.slow
def test_collect_train_run_pipeline(tmp_path, config_path):
    data = str(tmp_path / "data.jsonl")
    model = str(tmp_path / "model.bin")
    assert main(["collect", "--config", config_path, "--out", data, "--gamma", "5"]) == 0
    with open(data) as f:
        assert sum(1 for _ in f) == 15
    assert main(["train", "--config", config_path, "--data", data, "--out", model]) == 0
    assert (tmp_path / "model_loss.csv").exists()
    with open(model + ".meta.json") as f:
        assert json.load(f)["datapoints"] == 15
    prefix = str(tmp_path / "metanet")
    assert main(["run", "--config", config_path, "--selector", "metanet", "--model", model,
                 "--intervals", "4", "--report", prefix]) == 0
    assert (tmp_path / "metanet_predictions.svg").exists()
    assert main(["run", "--config", config_path, "--selector", "ucb", "--data", data,
                 "--intervals", "3", "--report", str(tmp_path / "ucb")]) == 0


def test_train_ablation_and_mismatched_dataset(tmp_path, config_path, small_config_dict):
    data = str(tmp_path / "data.jsonl")
    assert main(["collect", "--config", config_path, "--out", data, "--gamma", "4"]) == 0
    model = str(tmp_path / "gnn.bin")
    assert main(["train", "--config", config_path, "--data", data, "--out", model, "--ablation", "gnn"]) == 0
    with open(model + ".meta.json") as f:
        assert json.load(f)["ablation"] == "gnn"

    small_config_dict["policies"]["set"] = ["round_robin", "best_fit"]
    other = tmp_path / "other.yaml"
    other.write_text(yaml.safe_dump(small_config_dict))
    assert main(["train", "--config", str(other), "--data", data, "--out", str(tmp_path / "x.bin")]) == 1


def test_compare_and_sweep(tmp_path, config_path):
    out = str(tmp_path / "compare")
    assert main(["compare", "--config", config_path, "--selectors", "static:best_fit,random",
                 "--intervals", "3", "--out", out]) == 0
    assert pd.read_csv(out + ".csv")["selector"].tolist() == ["random", "static:best_fit"]
    sweep = str(tmp_path / "sweep")
    assert main(["sweep", "--config", config_path, "--hosts", "2,6", "--selector", "static:best_fit",
                 "--intervals", "3", "--out", sweep]) == 0
    assert pd.read_csv(sweep + ".csv")["hosts"].tolist() == [2, 6]


def test_calibrate_writes_deadlines(tmp_path, config_path):
    out = str(tmp_path / "calibrated.yaml")
    assert main(["calibrate", "--config", config_path, "--out", out]) == 0
    cfg = load_config(out)
    assert set(cfg.sla.deadlines) == {"heavy", "light"}


def test_same_seed_gives_identical_reports(tmp_path, config_path):
    for name in ("a", "b"):
        assert main(["run", "--config", config_path, "--selector", "qlearn", "--seed", "5", "--intervals", "6",
                     "--report", str(tmp_path / name)]) == 0
    for suffix in (".csv", "_summary.json"):
        assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()
