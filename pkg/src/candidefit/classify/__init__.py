"""Emotion classifiers and their JSON serialization."""

from __future__ import annotations

import json

import numpy as np

from ..features import NormStats, apply_norm, fit_norm
from ..metrics import ConfusionMatrix, accuracy
from .mlp import ARCHITECTURES, MlpModel, TrainConfig, mlp_forward, mlp_train
from .svm import SvmModel, poly_kernel, smo, svm_predict, svm_train

FORMAT = "candidefit-classifier"
VERSION = 1
CLASSIFIERS = ("svm-poly", "mlp")


class TrainedClassifier:
    """A fitted SVM or MLP bundled with its feature kind and normalization."""

    def __init__(self, kind, feature_kind, norm, model):
        if kind not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {kind!r}; expected one of {CLASSIFIERS}")
        self.kind = kind
        self.feature_kind = feature_kind
        self.norm = norm
        self.model = model

    @property
    def classes(self):
        return list(self.model.classes)

    @property
    def n_features(self):
        return self.norm.mu.size

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"dimension mismatch: model expects {self.n_features} features "
                             f"({self.feature_kind}), got {X.shape[1]}")
        return self.model.predict(apply_norm(X, self.norm))

    def to_dict(self):
        return {"format": FORMAT, "version": VERSION, "classifier": self.kind,
                "feature_kind": self.feature_kind, "norm": self.norm.to_dict(),
                "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise ValueError("not a classifier file")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported classifier file version {d.get('version')}")
        kind = d["classifier"]
        model = SvmModel.from_dict(d["model"]) if kind == "svm-poly" else MlpModel.from_dict(d["model"])
        return cls(kind, d["feature_kind"], NormStats.from_dict(d["norm"]), model)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def stratified_split(labels, fraction, rng):
    """Indices ``(train, validation)`` holding out ``fraction`` of every class."""
    labels = np.asarray(labels, dtype=object)
    train, val = [], []
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(fraction * idx.size))
        val.extend(idx[:k].tolist())
        train.extend(idx[k:].tolist())
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(val, dtype=int))


def train_classifier(kind, X, labels, feature_kind, classes=None, seed=0, svm_params=None,
                     mlp_config=None, arch=None, val_fraction=0.2):
    """Normalize, train and wrap a classifier.

    The MLP holds out a stratified ``val_fraction`` of ``X`` for its plateau
    schedule and best-epoch selection; the SVM uses all rows.  The log's
    ``input_accuracy`` is the accuracy of the returned classifier on all of
    ``X``.

    Returns
    -------
    TrainedClassifier, dict
    """
    if kind not in CLASSIFIERS:
        raise ValueError(f"unknown classifier {kind!r}; expected one of {', '.join(CLASSIFIERS)}")
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    if any(lbl is None for lbl in labels):
        raise ValueError("training rows need labels")
    classes = list(classes) if classes is not None else sorted(set(labels))
    unknown = set(labels) - set(classes)
    if unknown:
        raise ValueError(f"labels outside the class list: {sorted(unknown)}")
    if len(set(labels)) < 2:
        raise ValueError("single-class input: need at least two classes")
    norm = fit_norm(X)
    Z = apply_norm(X, norm)
    if kind == "svm-poly":
        model = svm_train(Z, labels, classes=classes, **(svm_params or {}))
        log = {"classifier": kind, "params": {"degree": model.degree, "gamma": model.gamma,
                                              "coef0": model.coef0, "C": model.C},
               "smo_iterations": [m.n_iter for m in model.machines]}
    else:
        cfg = mlp_config or TrainConfig(seed=seed)
        arch = arch or ("au8net" if feature_kind == "au8" else "fp68net")
        index = {c: i for i, c in enumerate(classes)}
        y = np.array([index[c] for c in labels])
        tr, va = stratified_split(labels, val_fraction, np.random.default_rng(cfg.seed))
        if va.size == 0:
            raise ValueError("too few rows for a validation split")
        model, log = mlp_train(arch, Z[tr], y[tr], Z[va], y[va], cfg, classes=classes)
        log = {"classifier": kind, "arch": arch, "n_train": int(tr.size), "n_val": int(va.size), **log}
    clf = TrainedClassifier(kind, feature_kind, norm, model)
    C = ConfusionMatrix.from_predictions(labels, clf.predict(X), classes)
    log["input_accuracy"] = accuracy(C)
    log["n_input"] = len(labels)
    return clf, log


__all__ = [
    "ARCHITECTURES", "CLASSIFIERS", "MlpModel", "SvmModel", "TrainConfig", "TrainedClassifier",
    "mlp_forward", "mlp_train", "poly_kernel", "smo", "stratified_split", "svm_predict",
    "svm_train", "train_classifier",
]
