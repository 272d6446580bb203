import csv
import json

import pytest

from pgqr.cli import main

from helpers import tiny_run_config


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_writes_csv_and_sidecar(tmp_path):
    out = tmp_path / "sim5.csv"
    assert main(["simulate", "--sim", "5", "--n", "100", "--seed", "3", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["x1", "y"] and len(rows) == 101
    assert json.loads((tmp_path / "sim5.csv.json").read_text())["seed"] == 3


def test_pipeline_stages_chain_through_files(tmp_path):
    cfg = tiny_run_config(tmp_path / "cfg.json")
    data = tmp_path / "d.csv"
    assert main(["simulate", "--sim", "1", "--n", "80", "--out", str(data)]) == 0
    run = tmp_path / "run"
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(run)]) == 0
    for name in ("config.json", "train.csv", "val.csv", "test.csv", "model.npz", "train_log.csv"):
        assert (run / name).exists(), name
    assert len(_rows(run / "train.csv")) == 65 and len(_rows(run / "test.csv")) == 9

    ckpt = str(run / "model.npz")
    assert main(["select-lambda", "--checkpoint", ckpt, "--val", str(run / "val.csv"),
                 "--config", str(cfg), "--out", str(run)]) == 0
    lam = json.loads((run / "lambda_star.json").read_text())["lambda_star"]
    assert lam in (0.0, 1 / 3, 2 / 3, 1.0)
    assert len(_rows(run / "selection.csv")) == 5

    pred = tmp_path / "pred"
    assert main(["predict", "--checkpoint", ckpt, "--points", str(run / "test.csv"),
                 "--config", str(cfg), "--out", str(pred)]) == 0
    assert len(list(pred.glob("point_*.csv"))) == 8
    assert len(_rows(pred / "summary.csv")) == 9

    ev = tmp_path / "eval"
    assert main(["evaluate", "--checkpoint", ckpt, "--lambda-star", str(lam), "--test", str(run / "test.csv"),
                 "--oracle", "1", "--config", str(cfg), "--out", str(ev)]) == 0
    metrics = _rows(ev / "metrics.csv")
    assert metrics[0] == ["method", "sim", "pmse_mean", "pmse_sd", "coverage", "width"]
    assert metrics[1][:2] == ["PGQR", "1"]
    assert json.loads((ev / "evaluation.json").read_text())["crossing_violations"] == 0
    assert not (ev / "FAILED").exists()


def test_report_writes_table_and_per_point_payloads(tmp_path):
    cfg = tiny_run_config(tmp_path / "cfg.json")
    out = tmp_path / "rep"
    assert main(["report", "--config", str(cfg), "--replicates", "2", "--out", str(out)]) == 0
    table = _rows(out / "table.csv")
    assert [r[:2] for r in table[1:]] == [["PGQR", "5"]]
    assert len(_rows(out / "replicates.csv")) == 3
    assert (out / "sim5" / "rep01" / "cde.csv").exists()


def test_failing_stage_is_named_and_leaves_a_marker(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n1,\n")
    out = tmp_path / "run"
    assert main(["train", "--data", str(bad), "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("pgqr train: error:") and "row 2" in err
    assert (out / "FAILED").read_text().startswith("stage: train")


def test_marker_is_cleared_by_a_later_success(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--sim", "5", "--n", "0", "--out", str(out)]) == 1
    assert (tmp_path / "sim.csv.FAILED").exists()
    assert main(["simulate", "--sim", "5", "--n", "5", "--out", str(out)]) == 0
    assert not (tmp_path / "sim.csv.FAILED").exists()


def test_predict_without_selection_explains_what_is_missing(tmp_path, capsys):
    cfg = tiny_run_config(tmp_path / "cfg.json")
    data = tmp_path / "d.csv"
    main(["simulate", "--sim", "5", "--n", "60", "--out", str(data)])
    main(["train", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "run")])
    code = main(["predict", "--checkpoint", str(tmp_path / "run" / "model.npz"), "--points", str(data),
                 "--out", str(tmp_path / "p")])
    assert code == 1
    assert "select-lambda" in capsys.readouterr().err


def test_unknown_simulation_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--sim", "9", "--n", "5", "--out", str(tmp_path / "x.csv")])
    assert exc.value.code == 2
