"""File formats: landmark and feature CSV, JSON lines, run manifests.

Floats are written with ``repr`` (shortest round-trip form), so a value read
back is bit-identical and reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .features import kind_for_dim
from .fitting import LandmarkFrame
from .model import N_LANDMARKS

MANIFEST_NAME = "manifest.json"


class InputError(ValueError):
    """Malformed or missing input file."""


def _num(x):
    return repr(float(x))


def landmark_header():
    cols = ["label", "tau"]
    for i in range(N_LANDMARKS):
        cols += [f"x{i}", f"y{i}"]
    return cols


def write_landmarks_csv(path, frames):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(landmark_header())
        for f in frames:
            w.writerow([f.label or "", f.tau, *(_num(v) for v in f.points.reshape(-1))])


def _open_csv(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    return path, rows


def read_landmarks_csv(path):
    path, rows = _open_csv(path)
    if rows[0] != landmark_header():
        raise InputError(f"{path}:1: expected header label,tau,x0,y0,...,x67,y67")
    frames = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2 + 2 * N_LANDMARKS:
            raise InputError(f"{path}:{lineno}: expected {2 + 2 * N_LANDMARKS} fields, got {len(row)}")
        try:
            pts = np.array([float(v) for v in row[2:]]).reshape(N_LANDMARKS, 2)
            frames.append(LandmarkFrame(int(row[1]), pts, row[0] or None))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    return frames


def write_features_csv(path, X, labels):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *(f"v{i}" for i in range(X.shape[1]))])
        for lbl, row in zip(labels, X):
            w.writerow([lbl if lbl is not None else "", *(_num(v) for v in row)])


def read_features_csv(path):
    """Return ``(X, labels, kind)``; the kind follows from the column count."""
    path, rows = _open_csv(path)
    header = rows[0]
    dim = len(header) - 1
    if header[:1] != ["label"] or header[1:] != [f"v{i}" for i in range(dim)]:
        raise InputError(f"{path}:1: expected header label,v0,v1,...")
    try:
        kind = kind_for_dim(dim)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    X, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise InputError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
        try:
            X.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        labels.append(row[0] or None)
    if not X:
        raise InputError(f"{path}: no feature rows")
    X = np.array(X)
    if not np.all(np.isfinite(X)):
        raise InputError(f"{path}: non-finite feature value")
    return X, labels, kind


def dumps_json(obj, indent=None):
    return json.dumps(obj, sort_keys=True, indent=indent, allow_nan=False)


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj, indent=1) + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(dumps_json(r) + "\n")


def read_jsonl(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise InputError(f"{path}:{lineno}: invalid JSON ({exc})") from None
    return out


def config_hash(config):
    """SHA-256 of the canonical (sorted-key, compact) JSON form of ``config``."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(out_dir, command, config, seed=None, inputs=(), outputs=(), wall_time=None):
    """Write the run manifest into ``out_dir``.

    Wall time is recorded only when given, so that default reruns stay
    byte-identical.
    """
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "tool_version": __version__,
    }
    if wall_time is not None:
        manifest["wall_time_s"] = wall_time
    path = Path(out_dir) / MANIFEST_NAME
    write_json(path, manifest)
    return path


def write_dataset(out_dir, dataset):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_landmarks_csv(out_dir / "train.csv", dataset.train)
    write_landmarks_csv(out_dir / "test.csv", dataset.test)
    write_jsonl(out_dir / "truth.jsonl", dataset.truth)
    return ["train.csv", "test.csv", "truth.jsonl"]
