import json
from pathlib import Path

import numpy as np
import pytest

from xfdd.cli import main

TINY_CONFIG = {
    "architectures": [[6, 3]],
    "lambda1_grid": [0.05],
    "lambda2_grid": [1.0],
    "lambda3_grid": [0.005],
    "delta_grid": [2.0],
    "lambda_thresh": [0.05, 0.1, 0.15],
    "lag_candidates": [1],
    "epochs": 50,
    "batch_size": 64,
    "learning_rate": 0.002,
    "val_fraction": 0.25,
    "epsilon": 0.01,
    "max_iterations": 3,
    "seed": 0,
}


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert main(["synth", "--preset", "small", "--out", str(out), "--seed", "0"]) == 0
    return out


@pytest.fixture(scope="module")
def detect_run(tmp_path_factory, bench_dir):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "config.json"
    cfg.write_text(json.dumps(TINY_CONFIG))
    code = main([
        "detect", "--config", str(cfg),
        "--train", str(bench_dir / "train.csv"),
        "--test", str(bench_dir / "test.csv"),
        "--out", str(out),
    ])
    assert code == 0
    return out, cfg


def test_synth_writes_benchmark(bench_dir):
    for name in ("train.csv", "test.csv", "ground_truth.json", "manifest.json"):
        assert (bench_dir / name).exists()
    truth = json.loads((bench_dir / "ground_truth.json").read_text())
    assert set(truth["faults"]) == {"1", "2", "3", "4"}


def test_detect_artifacts(detect_run):
    out, _ = detect_run
    for name in (
        "ledger.csv", "model.json", "relevance.csv", "relevance.json",
        "relevance_bar.svg", "confusion.csv", "confusion.svg",
        "heatmap.csv", "heatmap.svg", "fdr_table.csv",
        "loss_trace.csv", "manifest.json",
    ):
        assert (out / name).exists(), name
    ledger = (out / "ledger.csv").read_text().splitlines()
    assert len(ledger) >= 2  # header plus at least one iteration row
    model = json.loads((out / "model.json").read_text())
    assert model["format_version"] == 1
    assert model["mode"] == "detect"


def test_detect_rerun_reproduces_artifacts_bitwise(detect_run, bench_dir, tmp_path):
    out, cfg = detect_run
    again = tmp_path / "again"
    code = main([
        "detect", "--config", str(cfg),
        "--train", str(bench_dir / "train.csv"),
        "--test", str(bench_dir / "test.csv"),
        "--out", str(again),
    ])
    assert code == 0
    for name in ("ledger.csv", "model.json", "relevance.csv", "confusion.csv",
                 "fdr_table.csv", "heatmap.csv", "loss_trace.csv", "manifest.json"):
        assert (out / name).read_bytes() == (again / name).read_bytes(), name


def test_relevance_covers_all_active_variables(detect_run):
    out, _ = detect_run
    model = json.loads((out / "model.json").read_text())
    active = [n for n, keep in zip(model["variable_names"], model["active_mask"]) if keep]
    rows = (out / "relevance.csv").read_text().splitlines()[1:]
    assert sorted(r.split(",")[0] for r in rows) == sorted(active)


def test_explain_command(detect_run, bench_dir, tmp_path):
    out, _ = detect_run
    dest = tmp_path / "explain"
    code = main([
        "explain", "--model", str(out / "model.json"),
        "--data", str(bench_dir / "test.csv"),
        "--out", str(dest), "--lambda-thresh", "0.05",
    ])
    assert code == 0
    assert (dest / "relevance.csv").exists()
    assert (dest / "relevance_bar.svg").exists()
    assert (dest / "heatmap.csv").exists()


def test_score_command(detect_run, bench_dir, tmp_path):
    out, _ = detect_run
    dest = tmp_path / "score"
    code = main([
        "score", "--model", str(out / "model.json"),
        "--stream", str(bench_dir / "test.csv"),
        "--out", str(dest), "--explain-alarms",
    ])
    assert code == 0
    lines = (dest / "verdicts.csv").read_text().splitlines()
    assert lines[0].startswith("row,status,class_id")
    model = json.loads((out / "model.json").read_text())
    lag = model["lag"]
    statuses = [line.split(",")[1] for line in lines[1:]]
    assert statuses[:lag] == ["buffering"] * lag
    assert "ok" in statuses


def test_eval_command(detect_run, bench_dir, tmp_path):
    out, _ = detect_run
    dest = tmp_path / "eval"
    code = main([
        "eval", "--model", str(out / "model.json"),
        "--data", str(bench_dir / "test.csv"), "--out", str(dest),
    ])
    assert code == 0
    metrics = json.loads((dest / "metrics.json").read_text())
    assert 0.5 < metrics["accuracy"] <= 1.0
    assert "false_alarm_rate" in metrics
    assert (dest / "fdr_table.csv").exists()


def test_unknown_flag_exits_2(capsys):
    assert main(["detect", "--nonsense"]) == 2


def test_missing_config_exits_2(tmp_path, capsys):
    code = main([
        "detect", "--config", str(tmp_path / "absent.json"),
        "--train", "x", "--test", "y", "--out", str(tmp_path),
    ])
    assert code == 2


def test_missing_data_exits_3(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY_CONFIG))
    code = main([
        "detect", "--config", str(cfg),
        "--train", str(tmp_path / "absent.csv"),
        "--test", str(tmp_path / "absent.csv"),
        "--out", str(tmp_path),
    ])
    assert code == 3


def test_invalid_config_value_exits_2(tmp_path, bench_dir, capsys):
    cfg = tmp_path / "c.json"
    bad = dict(TINY_CONFIG, lambda_thresh=[2.0])
    cfg.write_text(json.dumps(bad))
    code = main([
        "detect", "--config", str(cfg),
        "--train", str(bench_dir / "train.csv"),
        "--test", str(bench_dir / "test.csv"),
        "--out", str(tmp_path),
    ])
    assert code == 2


def test_seed_override_changes_manifest(detect_run, bench_dir, tmp_path):
    _, cfg = detect_run
    dest = tmp_path / "seeded"
    code = main([
        "detect", "--config", str(cfg),
        "--train", str(bench_dir / "train.csv"),
        "--test", str(bench_dir / "test.csv"),
        "--out", str(dest), "--seed", "99",
    ])
    assert code == 0
    manifest = json.loads((dest / "manifest.json").read_text())
    assert manifest["seed"] == 99
    assert manifest["config"]["seed"] == 99
