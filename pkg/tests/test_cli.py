import filecmp
import json
import os

import pytest

from painreg.cli import EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, format_table, main

FAST = ["--iterations", "20", "--log-every", "5", "--lr", "0.001"]


@pytest.fixture
def synth_csv(tmp_path):
    path = str(tmp_path / "synth.csv")
    code = main(["synth", "--out", path, "--subjects", "3", "--frames", "24", "--dim", "4", "--seed", "1"])
    assert code == EXIT_OK
    return path


def _read_json(*parts):
    with open(os.path.join(*parts), encoding="utf-8") as f:
        return json.load(f)


def test_synth_summary(tmp_path, capsys):
    path = str(tmp_path / "s.csv")
    assert main(["synth", "--out", path, "--subjects", "2", "--frames", "12", "--dim", "3"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["rows"] == 24
    assert summary["class_histogram"] == [4] * 6
    assert summary["zero_fraction"] == pytest.approx(1 / 6)
    with open(path, encoding="utf-8") as f:
        assert f.readline().strip() == "subject_id,sequence_id,frame_index,label,f0,f1,f2"


def test_synth_is_deterministic(tmp_path):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    for path in (a, b):
        assert main(["synth", "--out", path, "--subjects", "5", "--frames", "200", "--dim", "32", "--seed", "7"]) == EXIT_OK
    assert filecmp.cmp(a, b, shallow=False)
    with open(a, encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 1 + 1000


def test_train_then_eval(synth_csv, tmp_path, capsys):
    model_dir = str(tmp_path / "model")
    assert main(["train", "--data", synth_csv, "--out", model_dir] + FAST) == EXIT_OK
    checkpoint = _read_json(model_dir, "checkpoint.json")
    assert checkpoint["dims"]["D"] == 4
    assert checkpoint["preprocessing"]["dedup"] is True
    with open(os.path.join(model_dir, "training_log.csv"), encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 1 + 4

    eval_dir = str(tmp_path / "eval")
    capsys.readouterr()
    code = main(["eval", "--data", synth_csv, "--checkpoint", os.path.join(model_dir, "checkpoint.json"),
                 "--out", eval_dir])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    metrics = _read_json(eval_dir, "metrics.json")
    assert printed["wmae"] == metrics["wmae"]
    assert metrics["num_frames"] == 72
    assert metrics["config"]["model"]["iterations"] == 20


def test_eval_zero_baseline(synth_csv, tmp_path):
    out = str(tmp_path / "zeros")
    assert main(["eval", "--data", synth_csv, "--baseline", "zeros", "--out", out]) == EXIT_OK
    metrics = _read_json(out, "metrics.json")
    assert metrics["wmae"] == pytest.approx(2.5)
    assert metrics["wmse"] == pytest.approx(55 / 6)
    assert metrics["pcc"] is None


def test_eval_oracle_needs_train_data(synth_csv, tmp_path):
    assert main(["eval", "--data", synth_csv, "--baseline", "oracle", "--out", str(tmp_path)]) == EXIT_USAGE


def test_config_file_and_flag_precedence(synth_csv, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"iterations": 10, "hidden_dim": 8, "loss": {"lambda": 0.5}}), encoding="utf-8")
    out = str(tmp_path / "model")
    code = main(["train", "--data", synth_csv, "--out", out, "--config", str(config), "--iterations", "4"])
    assert code == EXIT_OK
    saved = _read_json(out, "checkpoint.json")["config"]
    assert saved["iterations"] == 4
    assert saved["hidden_dim"] == 8
    assert saved["loss"]["lambda"] == 0.5


def test_loso_table_matches_aggregate(synth_csv, tmp_path, capsys):
    out = str(tmp_path / "loso")
    capsys.readouterr()
    assert main(["loso", "--data", synth_csv, "--out", out] + FAST) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["method", "MAE", "MSE", "PCC", "wMAE", "wMSE"]
    aggregate = _read_json(out, "aggregate_metrics.json")
    for line, report in ((lines[1], aggregate["pooled"]), (lines[2], aggregate["baselines"]["all_zeros"])):
        cells = line.split()[1:]
        for cell, key in zip(cells, ("mae", "mse", "pcc", "wmae", "wmse")):
            if report[key] is None:
                assert cell == "N/A"
            else:
                assert float(cell) == pytest.approx(report[key], abs=5e-7)
    assert os.path.exists(os.path.join(out, "fold_S2", "checkpoint.json"))


@pytest.mark.parametrize("sampler", ["balanced", "uniform"])
def test_loso_samplers(synth_csv, tmp_path, sampler):
    out = str(tmp_path / sampler)
    assert main(["loso", "--data", synth_csv, "--out", out, "--sampler", sampler] + FAST) == EXIT_OK
    aggregate = _read_json(out, "aggregate_metrics.json")
    assert aggregate["config"]["train"]["sampler"] == sampler
    assert aggregate["pooled"]["wmae"] is not None


def test_loso_outputs_byte_identical(synth_csv, tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["loso", "--data", synth_csv, "--out", a, "--seed", "7"] + FAST) == EXIT_OK
    assert main(["loso", "--data", synth_csv, "--out", b, "--seed", "7", "--workers", "2"] + FAST) == EXIT_OK
    for name in ("aggregate_metrics.json", "predictions.csv", os.path.join("fold_S1", "checkpoint.json")):
        assert filecmp.cmp(os.path.join(a, name), os.path.join(b, name), shallow=False), name


def test_loso_repeats(synth_csv, tmp_path):
    out = str(tmp_path / "rep")
    assert main(["loso", "--data", synth_csv, "--out", out, "--repeats", "2"] + FAST) == EXIT_OK
    first = _read_json(out, "repeat_0", "aggregate_metrics.json")["config"]["train"]["seed"]
    second = _read_json(out, "repeat_1", "aggregate_metrics.json")["config"]["train"]["seed"]
    assert first == 0 and second != 0


def test_loso_divergence_exit_code(synth_csv, tmp_path):
    args = ["loso", "--data", synth_csv, "--out", str(tmp_path / "d"), "--lr", "1e30", "--iterations", "50",
            "--activation", "identity", "--lambda", "1", "--center-norm", "l2"]
    assert main(args) == EXIT_DIVERGED
    aggregate = _read_json(tmp_path, "d", "aggregate_metrics.json")
    assert len(aggregate["failed_folds"]) == 3


def test_dedup_command(tmp_path, write_text, capsys):
    header = "subject_id,sequence_id,frame_index,label,f0\n"
    rows = "".join(f"A,A1,{i},{0 if i < 8 else 2},{i}\n" for i in range(10))
    src = write_text("in.csv", header + rows)
    out = str(tmp_path / "out.csv")
    assert main(["dedup", "--data", src, "--out", out]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary == {"input_frames": 10, "kept_frames": 3, "removed_frames": 7}


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["train"],
        ["loso", "--data", "x.csv", "--out", "o", "--center-norm", "l3"],
        ["train", "--data", "x.csv", "--out", "o", "--batch-size", "many"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_bad_config_value(synth_csv, tmp_path):
    assert main(["train", "--data", synth_csv, "--out", str(tmp_path), "--dropout", "1.5"]) == EXIT_USAGE


def test_missing_file(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == EXIT_DATA


def test_malformed_csv(tmp_path, write_text):
    path = write_text("bad.csv", "subject_id,sequence_id,frame_index,label,f0\nA,A1,0,9,0.1\n")
    assert main(["train", "--data", path, "--out", str(tmp_path)] + FAST) == EXIT_DATA


def test_checkpoint_width_mismatch(synth_csv, tmp_path, write_text):
    model_dir = str(tmp_path / "model")
    assert main(["train", "--data", synth_csv, "--out", model_dir] + FAST) == EXIT_OK
    other = write_text("other.csv", "subject_id,sequence_id,frame_index,label,f0\nA,A1,0,1,0.1\n")
    code = main(["eval", "--data", other, "--checkpoint", os.path.join(model_dir, "checkpoint.json"),
                 "--out", str(tmp_path / "e")])
    assert code == EXIT_DATA


def test_format_table_marks_missing_pcc():
    table = format_table([("method", {"mae": 1.0, "mse": 2.0, "pcc": None, "wmae": 0.5, "wmse": 0.25})])
    assert table.splitlines()[1].split() == ["method", "1.000000", "2.000000", "N/A", "0.500000", "0.250000"]


def test_compare_rows_and_samplers(synth_csv, tmp_path, capsys):
    out = str(tmp_path / "cmp")
    capsys.readouterr()
    assert main(["compare", "--data", synth_csv, "--out", out, "--iterations", "4", "--log-every", "2"]) == EXIT_OK
    payload = _read_json(out, "compare.json")
    assert list(payload["methods"]) == [
        "smooth_l1",
        "l1 + l1 center",
        "smooth_l1 + l1 center",
        "smooth_l1 + l2 center",
        "l1 + l1 center + sampling",
        "smooth_l1 + l1 center + sampling",
    ]
    samplers = [m["sampler"] for m in payload["methods"].values()]
    assert samplers == ["uniform"] * 4 + ["balanced"] * 2
    assert payload["methods"]["smooth_l1"]["loss"]["lambda"] == 0.0
    assert payload["methods"]["smooth_l1 + l2 center"]["loss"]["norm"] == "l2"
    assert payload["methods"]["l1 + l1 center + sampling"]["loss"]["kind"] == "l1"
    assert payload["baselines"]["all_zeros"]["wmae"] == pytest.approx(2.5)
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines[1:]] == ["smooth_l1", "l1", "smooth_l1", "smooth_l1", "l1",
                                                       "smooth_l1", "all_zeros"]


def test_zero_turning_point_trains_like_l1(synth_csv, tmp_path):
    a, b = str(tmp_path / "t0"), str(tmp_path / "l1")
    common = ["--data", synth_csv, "--lambda", "0", "--seed", "3"] + FAST
    assert main(["train", "--out", a, "--t", "0"] + common) == EXIT_OK
    assert main(["train", "--out", b, "--loss", "l1"] + common) == EXIT_OK
    first, second = _read_json(a, "checkpoint.json"), _read_json(b, "checkpoint.json")
    assert first["params"] == second["params"]
    assert [e["regression"] for e in first["training_log"]] == [e["regression"] for e in second["training_log"]]


def test_loso_with_fold_missing_a_class(tmp_path, write_text):
    rows = ["subject_id,sequence_id,frame_index,label,f0,f1"]
    for subject, labels in (("A", range(5)), ("B", range(5)), ("C", range(6))):
        for i, label in enumerate(labels):
            rows.append(f"{subject},{subject}1,{i},{label},{0.1 * i},{label - 2.5}")
    path = write_text("gap.csv", "\n".join(rows) + "\n")
    out = str(tmp_path / "loso")
    assert main(["loso", "--data", path, "--out", out, "--iterations", "10", "--no-dedup"]) == EXIT_OK
    aggregate = _read_json(out, "aggregate_metrics.json")
    assert aggregate["failed_folds"] == []
    assert aggregate["pooled"]["num_frames"] == 16
