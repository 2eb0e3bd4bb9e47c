import numpy as np
import pytest

from candidefit.fitting import LandmarkFrame
from candidefit.io import (InputError, config_hash, read_features_csv, read_jsonl,
                           read_landmarks_csv, write_features_csv, write_jsonl,
                           write_landmarks_csv, write_manifest, read_json)


def test_landmark_csv_round_trip_is_exact(tmp_path, rng):
    frames = [LandmarkFrame(i, rng.normal(300, 50, (68, 2)), lbl)
              for i, lbl in enumerate(["smile", None, "angry"])]
    p = tmp_path / "l.csv"
    write_landmarks_csv(p, frames)
    back = read_landmarks_csv(p)
    assert [f.label for f in back] == ["smile", None, "angry"]
    for a, b in zip(frames, back):
        assert a.tau == b.tau and np.array_equal(a.points, b.points)
    assert p.read_text().splitlines()[0].startswith("label,tau,x0,y0,x1,y1")


def test_landmark_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    with pytest.raises(InputError, match="no such file"):
        read_landmarks_csv(p)
    p.write_text("label,tau\nx,1\n")
    with pytest.raises(InputError, match="header"):
        read_landmarks_csv(p)
    header = "label,tau," + ",".join(f"x{i},y{i}" for i in range(68))
    p.write_text(header + "\nsmile,0,1,2\n")
    with pytest.raises(InputError, match=":2: expected 138 fields"):
        read_landmarks_csv(p)


def test_feature_csv_round_trip(tmp_path, rng):
    X = rng.normal(size=(5, 8))
    p = tmp_path / "f.csv"
    write_features_csv(p, X, list("abcde"))
    Y, labels, kind = read_features_csv(p)
    assert kind == "au8" and labels == list("abcde")
    assert np.array_equal(X, Y)


def test_feature_csv_unknown_dimension(tmp_path):
    p = tmp_path / "f.csv"
    write_features_csv(p, np.zeros((2, 5)), ["a", "b"])
    with pytest.raises(InputError, match="no feature kind"):
        read_features_csv(p)


def test_jsonl_round_trip(tmp_path):
    recs = [{"tau": 1, "w": [0.1, 0.2]}, {"tau": 2, "w": [1e-300, -0.0]}]
    p = tmp_path / "r.jsonl"
    write_jsonl(p, recs)
    assert read_jsonl(p) == recs


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_manifest_contents(tmp_path):
    write_manifest(tmp_path, "synth", {"n": 3}, seed=7, inputs=["x"], outputs=["b", "a"])
    m = read_json(tmp_path / "manifest.json")
    assert m["outputs"] == ["a", "b"] and m["seed"] == 7
    assert m["config_hash"] == config_hash({"n": 3})
    assert "wall_time_s" not in m
    write_manifest(tmp_path, "synth", {"n": 3}, wall_time=1.5)
    assert read_json(tmp_path / "manifest.json")["wall_time_s"] == 1.5
