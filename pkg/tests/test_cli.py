import json

import pandas as pd
import pytest

from pycasetime.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main

FAST_CONFIG = """\
synth: {n_procedures: 3, cases_per_procedure: 15, n_surgeons: 6, seed: 5}
min_procedure_count: 5
cv: {repeats: 2, k: 3, n_jobs: 1}
forest: {n_trees: 4, max_features: 5}
boost: {n_estimators: 4}
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "fast.yaml"
    path.write_text(FAST_CONFIG, encoding="utf-8")
    return str(path)


@pytest.fixture
def cases_csv(tmp_path, config):
    out = tmp_path / "cases.csv"
    assert main(["-c", config, "synth", "--out", str(out)]) == EXIT_OK
    return out


def test_synth_writes_data_and_truth(cases_csv):
    lines = cases_csv.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("case_id,")
    assert len(lines) == 1 + 3 * 15
    assert cases_csv.with_suffix(".truth.csv").exists()


def test_synth_seed_flag(tmp_path, config, cases_csv):
    other = tmp_path / "other.csv"
    assert main(["-c", config, "synth", "--out", str(other), "--seed", "6"]) == EXIT_OK
    assert other.read_bytes() != cases_csv.read_bytes()


def test_validate(tmp_path, cases_csv, capsys):
    assert main(["validate", str(cases_csv)]) == EXIT_OK
    bad = tmp_path / "bad.csv"
    lines = cases_csv.read_text(encoding="utf-8").splitlines()
    lines[2] = lines[2].rsplit(",", 1)[0] + ",0"
    bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
    capsys.readouterr()
    assert main(["validate", str(bad)]) == EXIT_FAILURE
    assert "line 3" in capsys.readouterr().out


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "absent.csv")]) == EXIT_USAGE


def test_train_and_predict(tmp_path, config, cases_csv):
    model = tmp_path / "dtr.joblib"
    tree_json = tmp_path / "tree.json"
    code = main(["-c", config, "train", "--data", str(cases_csv), "--method", "DTR-SCH",
                 "--out", str(model), "--export-tree", str(tree_json)])
    assert code == EXIT_OK
    assert json.loads(tree_json.read_text(encoding="utf-8"))["n"] == 45

    predictions = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(cases_csv), "--out", str(predictions)]) == EXIT_OK
    frame = pd.read_csv(predictions)
    assert list(frame.columns) == ["case_id", "predicted_min"]
    assert len(frame) == 45
    assert (frame["predicted_min"] > 0).all()


def test_expert_model_rejects_missing_expert(tmp_path, config, cases_csv):
    model = tmp_path / "sch.joblib"
    assert main(["-c", config, "train", "--data", str(cases_csv), "--method", "RFR-SCH", "--out", str(model)]) == EXIT_OK
    lines = cases_csv.read_text(encoding="utf-8").splitlines()
    fields = lines[1].split(",")
    fields[9] = ""
    lines[1] = ",".join(fields)
    stripped = tmp_path / "stripped.csv"
    stripped.write_text("\n".join(lines) + "\n", encoding="utf-8")
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(stripped), "--out", str(out)]) == EXIT_FAILURE


def test_export_tree_requires_dtr(tmp_path, config, cases_csv):
    code = main(["-c", config, "train", "--data", str(cases_csv), "--method", "RFR",
                 "--out", str(tmp_path / "m.joblib"), "--export-tree", str(tmp_path / "t.json")])
    assert code == EXIT_USAGE


def test_unknown_method(tmp_path, config, cases_csv):
    code = main(["-c", config, "train", "--data", str(cases_csv), "--method", "KNN", "--out", str(tmp_path / "m")])
    assert code == EXIT_USAGE


def test_evaluate_outputs_are_reproducible(tmp_path, config):
    first, second = tmp_path / "a", tmp_path / "b"
    args = ["-c", config, "evaluate", "--methods", "AVG,SCH,DTR,RFR-SCH,ABR"]
    assert main(args + ["--out-dir", str(first)]) == EXIT_OK
    assert main(args + ["--out-dir", str(second)]) == EXIT_OK
    for name in ("report.json", "accuracy.csv", "wins.csv", "importance.csv", "importance_features.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()

    report = json.loads((first / "report.json").read_text(encoding="utf-8"))
    assert report["methods"] == ["AVG", "SCH", "DTR", "RFR-SCH", "ABR"]
    assert report["cv"] == {"repeats": 2, "k": 3, "seed": 0, "stratify": True}
    accuracy = pd.read_csv(first / "accuracy.csv")
    assert accuracy["procedure"].iloc[0] == "Overall"
    assert len(accuracy) == 4
    wins = pd.read_csv(first / "wins.csv")
    assert list(wins["baseline"]) == report["methods"]
    assert wins.loc[0, "RFR-SCH"] == report["win_counts"]["AVG"]["RFR-SCH"]
    assert wins.loc[0, "AVG"] == 0


def test_sweep(tmp_path, config):
    out = tmp_path / "sweep.csv"
    code = main(["-c", config, "sweep", "--methods", "AVG,SCH", "--grid", "0.1,0.2,0.4", "--m", "5", "--out", str(out)])
    assert code == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["p", "AVG", "SCH"]
    assert list(frame["p"]) == [0.1, 0.2, 0.4]
    assert list(frame["SCH"]) == sorted(frame["SCH"])


def test_figures(tmp_path, config):
    out_dir = tmp_path / "fig"
    assert main(["-c", config, "figures", "--bins", "8", "--out-dir", str(out_dir)]) == EXIT_OK
    for name in ("histogram_raw", "histogram_log", "weight_age", "weight_age_fit", "tau_curve"):
        assert (out_dir / f"{name}.csv").exists()
    assert len(pd.read_csv(out_dir / "histogram_raw.csv")) == 8
    tau = pd.read_csv(out_dir / "tau_curve.csv")
    assert tau["tau_min"].between(15, 60).all()


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["evaluate", "--folds", "three"],
        ["sweep", "--grid", "0.1,x", "--out", "s.csv"],
        ["nonsense"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("cv: {fold: 3}\n", encoding="utf-8")
    assert main(["-c", str(path), "evaluate"]) == EXIT_USAGE


def test_invalid_metric_flag(config):
    assert main(["-c", config, "evaluate", "--p", "1.5"]) == EXIT_USAGE
