import csv
import json

import pytest

from main import main
from ownership.datagen import DEFAULT_SPEC_PATH


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    runs = root / "runs"
    assert main(["gen", "--out", str(data), "--seed", "4"]) == 0
    assert main(["calibrate", "--out", str(runs), "--seed", "0"]) == 0
    return data, runs


def _read(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_gen_writes_dataset(workspace, capsys):
    data, _ = workspace
    for name in ("map.json", "events.txt", "truth.json", "roster.json", "affinity.json"):
        assert (data / name).exists()
    assert len(_read(data / "map.json")) == 34
    assert _read(data / "affinity.json")["son"]["coffee maker"] == 0.0


def test_gen_is_deterministic(tmp_path, workspace):
    data, _ = workspace
    assert main(["gen", "--out", str(tmp_path / "again"), "--seed", "4"]) == 0
    for name in ("map.json", "events.txt", "truth.json", "roster.json"):
        assert (tmp_path / "again" / name).read_bytes() == (data / name).read_bytes()


def test_gen_reports_counts(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "d")]) == 0
    out = capsys.readouterr().out
    assert "objects:  34" in out
    assert "sessions:" in out


def test_calibration_file(workspace):
    _, runs = workspace
    cal = _read(runs / "calibration.json")
    assert cal["n_calibration"] == 170
    assert cal["scorer"] == "heuristic:full"
    assert 0.0 < cal["q_cp"] < 1.0


def test_run_and_rerun_are_identical(workspace):
    data, runs = workspace
    args = ["run", "--data", str(data), "--out", str(runs)]
    assert main(args) == 0
    trial = runs / "coin" / "trial_000"
    first = {name: (trial / name).read_bytes() for name in ("trace.json", "predictions.json", "transcript.txt")}
    assert main(args) == 0
    for name, content in first.items():
        assert (trial / name).read_bytes() == content

    predictions = _read(trial / "predictions.json")
    trace = _read(trial / "trace.json")
    assert predictions["method"] == "coin"
    assert predictions["n_questions"] == trace["q_cnt"]
    assert set(predictions["predictions"]) == set(_read(data / "truth.json"))


def test_replay_matches(workspace, capsys):
    data, runs = workspace
    assert main(["run", "--data", str(data), "--out", str(runs), "--q-max", "4"]) == 0
    assert main(["replay", str(runs / "coin" / "trial_000" / "trace.json")]) == 0
    assert "Replay matches" in capsys.readouterr().out


def test_replay_detects_tampering(workspace, tmp_path):
    data, runs = workspace
    out = tmp_path / "runs"
    out.mkdir()
    (out / "calibration.json").write_bytes((runs / "calibration.json").read_bytes())
    assert main(["run", "--data", str(data), "--out", str(out), "--q-max", "3"]) == 0
    trace_path = out / "coin" / "trial_000" / "trace.json"
    trace = _read(trace_path)
    trace["steps"][0]["selected"] = "not_an_object"
    trace_path.write_text(json.dumps(trace), encoding="utf-8")
    assert main(["replay", str(trace_path)]) == 2


def test_no_questioning_ablation(workspace, tmp_path):
    data, runs = workspace
    out = tmp_path / "runs"
    cal = str(runs / "calibration.json")
    assert main(["run", "--data", str(data), "--out", str(out), "--calibration", cal, "--ablation", "no-questioning"]) == 0
    predictions = _read(out / "coin_no-questioning" / "trial_000" / "predictions.json")
    assert predictions["n_questions"] == 0


def test_spec_trials_regenerate_environments(workspace, tmp_path):
    _, runs = workspace
    out = tmp_path / "runs"
    cal = str(runs / "calibration.json")
    args = ["run", "--spec", str(DEFAULT_SPEC_PATH), "--trials", "2", "--q-max", "2", "--out", str(out), "--calibration", cal]
    assert main(args) == 0
    first = out / "coin" / "trial_000" / "data" / "events.txt"
    second = out / "coin" / "trial_001" / "data" / "events.txt"
    assert first.exists() and second.exists()
    assert first.read_bytes() != second.read_bytes()


def test_repeated_trials_on_fixed_dataset_rejected(workspace, tmp_path):
    data, runs = workspace
    cal = str(runs / "calibration.json")
    args = ["run", "--data", str(data), "--trials", "3", "--out", str(tmp_path / "runs"), "--calibration", cal]
    assert main(args) == 1
    assert not (tmp_path / "runs" / "coin").exists()


def test_eval_reports_every_method(workspace, tmp_path):
    data, runs = workspace
    out = tmp_path / "runs"
    cal = str(runs / "calibration.json")
    assert main(["run", "--data", str(data), "--out", str(out), "--calibration", cal]) == 0
    assert main(["run", "--data", str(data), "--out", str(out), "--method", "frequency"]) == 0
    assert main(["run", "--data", str(data), "--out", str(out), "--method", "last_user"]) == 0
    assert main(["eval", "--out", str(out)]) == 0

    report = _read(out / "report.json")
    assert set(report) == {"coin", "frequency", "last_user"}
    assert report["frequency"]["multi_user_sharing"]["subset_accuracy"]["mean"] == 0.0
    assert report["coin"]["overall"]["n_questions"]["trials"] == 1

    with open(out / "report.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert set(rows[0]) == {"method", "category", "metric", "mean", "std", "trials"}
    assert all(float(r["std"]) == 0.0 for r in rows)
    assert (out / "steps.csv").exists()


def test_eval_without_runs_is_input_error(tmp_path):
    assert main(["eval", "--out", str(tmp_path)]) == 1


def test_run_without_calibration_is_input_error(workspace, tmp_path):
    data, _ = workspace
    assert main(["run", "--data", str(data), "--out", str(tmp_path)]) == 1


def test_unknown_ablation_is_input_error(workspace, tmp_path):
    data, runs = workspace
    cal = str(runs / "calibration.json")
    assert main(["run", "--data", str(data), "--out", str(tmp_path), "--calibration", cal, "--ablation", "no-gravity"]) == 1


def test_bad_spec_is_input_error(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"users": [], "objects": []}), encoding="utf-8")
    assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 1


def test_exhausted_script_aborts_with_partial_trace(workspace, tmp_path):
    data, runs = workspace
    script = tmp_path / "answers.txt"
    script.write_text("It belongs to Bob.\n", encoding="utf-8")
    out = tmp_path / "runs"
    cal = str(runs / "calibration.json")
    code = main(["run", "--data", str(data), "--out", str(out), "--calibration", cal, "--respondent", f"scripted:{script}"])
    assert code == 2
    trace = _read(out / "coin" / "trial_000" / "trace.json")
    assert trace["aborted"]
    assert trace["q_cnt"] == 1
