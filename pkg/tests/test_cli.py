import json
import math

import numpy as np
import pytest

from candidefit import cli
from candidefit.fitting import FitDivergedError
from candidefit.metrics import ConfusionMatrix, cohens_kappa


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """A small synth -> fit -> extract -> train run shared by several tests."""
    d = tmp_path_factory.mktemp("pipe")
    assert run("--quiet", "--seed", 3, "--out", d / "synth", "synth", "--n-per-class", 8) == 0
    for split in ("train", "test"):
        assert run("--quiet", "--out", d / f"fit_{split}", "fit", d / "synth" / f"{split}.csv") == 0
        assert run("--quiet", "--out", d / f"x_{split}", "extract", d / f"fit_{split}" / "fits.jsonl") == 0
    assert run("--quiet", "--seed", 1, "--out", d / "mlp", "train", d / "x_train" / "features.csv",
               "--classifier", "mlp", "--epochs", 40) == 0
    assert run("--quiet", "--out", d / "svm", "train", d / "x_train" / "features.csv",
               "--classifier", "svm-poly") == 0
    return d


def test_synth_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("--quiet", "--seed", 7, "--out", tmp_path / name, "synth", "--n-per-class", 3) == 0
    for f in ("train.csv", "test.csv", "truth.jsonl", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_manifest_records_yaw(tmp_path):
    assert run("--quiet", "--out", tmp_path, "synth", "--n-per-class", 2, "--test-yaw", 0.785) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["config"]["test_yaws"] == [0.785]
    assert m["command"] == "synth"


def test_missing_model_file(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    assert run("--model", missing, "--out", tmp_path / "o", "synth", "--n-per-class", 2) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_flags_exit_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("--out", tmp_path, "synth", "--n-per-class", "many")
    assert exc.value.code == 2
    assert run("--quiet", "--out", tmp_path, "synth", "--n-per-class", 0) == 2


def test_fit_noiseless_round_trip(tmp_path):
    assert run("--quiet", "--out", tmp_path / "s", "synth", "--n-per-class", 3, "--noise-sigma", 0,
               "--no-augment", "--identity-sigma", 0) == 0
    assert run("--quiet", "--out", tmp_path / "f", "fit", tmp_path / "s" / "test.csv") == 0
    recs = [json.loads(l) for l in (tmp_path / "f" / "fits.jsonl").read_text().splitlines()]
    assert len(recs) == 24
    assert max(r["rmse"] for r in recs) <= 1e-6
    assert [r["tau"] for r in recs] == sorted(r["tau"] for r in recs)


def test_personalize_prints_sorted_table(tmp_path, capsys):
    assert run("--quiet", "--out", tmp_path / "s", "synth", "--n-per-class", 3, "--no-augment") == 0
    capsys.readouterr()
    code = run("--out", tmp_path / "p", "personalize", tmp_path / "s" / "train.csv", "--label", "neutral")
    assert code == 0
    out = capsys.readouterr().out
    rows = [l for l in out.splitlines() if l[:9].strip().replace(".", "").isdigit()]
    values = [float(l.split()[0]) for l in rows]
    assert len(values) == 15 and values == sorted(values)
    pers = json.loads((tmp_path / "p" / "personalization.json").read_text())
    assert len(pers["shape_coeffs"]) == 15
    assert run("--quiet", "--out", tmp_path / "f", "fit", tmp_path / "s" / "test.csv",
               "--personalization", tmp_path / "p" / "personalization.json") == 0


def test_personalize_single_frame(tmp_path, capsys):
    assert run("--quiet", "--out", tmp_path / "s", "synth", "--n-per-class", 1) == 0
    code = run("--out", tmp_path / "p", "fit", "--mode", "personalize", tmp_path / "s" / "train.csv",
               "--label", "neutral")
    assert code == 2
    assert "insufficient frames" in capsys.readouterr().err


def test_divergence_exit_three(tmp_path, monkeypatch, capsys):
    assert run("--quiet", "--out", tmp_path / "s", "synth", "--n-per-class", 1) == 0

    def fake(frames, *a, **k):
        return [FitDivergedError("diverged: non-finite residual", f.tau) for f in frames]

    monkeypatch.setattr(cli, "fit_frames", fake)
    assert run("--quiet", "--out", tmp_path / "f", "fit", tmp_path / "s" / "train.csv") == 3
    assert "diverged" in capsys.readouterr().err


def test_unknown_classifier(pipeline, tmp_path, capsys):
    assert run("--out", tmp_path, "train", pipeline / "x_train" / "features.csv",
               "--classifier", "forest") == 2
    err = capsys.readouterr().err
    assert "svm-poly" in err and "mlp" in err


def test_train_is_deterministic(pipeline, tmp_path):
    assert run("--quiet", "--seed", 1, "--out", tmp_path, "train", pipeline / "x_train" / "features.csv",
               "--classifier", "mlp", "--epochs", 40) == 0
    for f in ("model.json", "train_log.json", "manifest.json"):
        assert (tmp_path / f).read_bytes() == (pipeline / "mlp" / f).read_bytes()


@pytest.mark.parametrize("clf", ["mlp", "svm"])
def test_eval_on_training_set_matches_log(pipeline, tmp_path, clf):
    assert run("--quiet", "--out", tmp_path, "eval", pipeline / clf / "model.json",
               pipeline / "x_train" / "features.csv") == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    log = json.loads((pipeline / clf / "train_log.json").read_text())
    assert rep["accuracy"] == log["input_accuracy"]


def test_eval_report_and_plot_data(pipeline, tmp_path):
    assert run("--quiet", "--out", tmp_path, "eval", pipeline / "svm" / "model.json",
               pipeline / "x_test" / "features.csv", "--plot-data") == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["kappa"] == cohens_kappa(ConfusionMatrix(np.array(rep["confusion"])))
    lines = (tmp_path / "plot_data.csv").read_text().splitlines()
    assert lines[0] == "class,precision,recall,f1,support"
    assert len(lines) == 5


def test_eval_kind_mismatch(pipeline, tmp_path, capsys):
    assert run("--quiet", "--out", tmp_path / "x", "extract", "--kind", "fp68",
               pipeline / "synth" / "test.csv") == 0
    assert run("--out", tmp_path / "e", "eval", pipeline / "svm" / "model.json",
               tmp_path / "x" / "features.csv") == 2
    assert "feature kind mismatch" in capsys.readouterr().err


def test_fp68_train_and_eval(pipeline, tmp_path):
    assert run("--quiet", "--out", tmp_path / "x", "extract", "--kind", "fp68",
               pipeline / "synth" / "train.csv") == 0
    assert run("--quiet", "--out", tmp_path / "m", "train", tmp_path / "x" / "features.csv",
               "--classifier", "mlp", "--epochs", 5) == 0
    assert run("--quiet", "--out", tmp_path / "e", "eval", tmp_path / "m" / "model.json",
               tmp_path / "x" / "features.csv") == 0


def test_extract_au8_needs_fit_records(pipeline, tmp_path):
    assert run("--quiet", "--out", tmp_path, "extract", pipeline / "synth" / "train.csv") == 2


def test_report_writes_figures_and_tables(pipeline, tmp_path):
    for clf in ("mlp", "svm"):
        assert run("--quiet", "--out", tmp_path / f"ev_{clf}", "eval", pipeline / clf / "model.json",
                   pipeline / "x_test" / "features.csv") == 0
    args = ["report", tmp_path / "ev_mlp" / "report.json", tmp_path / "ev_svm" / "report.json",
            "--name", "mlp", "--name", "svm"]
    assert run("--quiet", "--out", tmp_path / "r1", *args) == 0
    assert run("--quiet", "--out", tmp_path / "r2", *args) == 0
    files = sorted(p.name for p in (tmp_path / "r1").iterdir())
    assert "summary.png" in files and "mlp_confusion.png" in files and "svm_per_class.csv" in files
    for name in files:
        if name != "manifest.json":
            assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    assert (tmp_path / "r1" / "summary.png").read_bytes()[:4] == b"\x89PNG"


def test_mlp_fits_clean_au8_training_split(tmp_path):
    """On a clean frontal split the AU8 net reaches high training accuracy."""
    assert run("--quiet", "--out", tmp_path / "s", "synth", "--n-per-class", 50, "--no-augment",
               "--identity-sigma", 0) == 0
    assert run("--quiet", "--out", tmp_path / "f", "fit", tmp_path / "s" / "train.csv") == 0
    assert run("--quiet", "--out", tmp_path / "x", "extract", tmp_path / "f" / "fits.jsonl") == 0
    assert run("--quiet", "--out", tmp_path / "m", "train", tmp_path / "x" / "features.csv",
               "--classifier", "mlp") == 0
    log = json.loads((tmp_path / "m" / "train_log.json").read_text())
    assert log["input_accuracy"] >= 0.9


def test_timing_flag_records_wall_time(tmp_path):
    assert run("--quiet", "--timing", "--out", tmp_path, "synth", "--n-per-class", 1) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["wall_time_s"] >= 0 and not math.isnan(m["wall_time_s"])
