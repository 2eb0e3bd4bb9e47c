"""Frontal-train / yawed-test comparison of the AU8 SVM and AU8 MLP."""

from __future__ import annotations

import os

import numpy as np

from .classify import TrainConfig, train_classifier
from .fitting import extract_action_units
from .metrics import ConfusionMatrix, accuracy
from .synth import SynthSpec, generate_dataset


def default_workers():
    env = os.environ.get("CANDIDE_FIT_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("CANDIDE_FIT_THREADS must be a positive integer")
        return n
    return min(8, os.cpu_count() or 1)


def pose_protocol(seed, model, corr, spec=None, workers=None, mlp_epochs=500):
    """Synthesize, extract AU8, train both classifiers, score the yawed test split.

    Returns a dict with train and test accuracies per classifier.
    """
    spec = spec or SynthSpec(seed=seed)
    workers = workers or default_workers()
    ds = generate_dataset(spec, model, corr)
    Xtr = extract_action_units(ds.train, model, corr, workers=workers)
    Xte = extract_action_units(ds.test, model, corr, workers=workers)
    ytr = [f.label for f in ds.train]
    yte = [f.label for f in ds.test]
    classes = sorted(set(ytr))
    out = {"seed": seed, "n_train": len(ytr), "n_test": len(yte)}
    for kind, name in (("svm-poly", "svm"), ("mlp", "mlp")):
        clf, log = train_classifier(kind, Xtr, ytr, "au8", classes=classes, seed=seed,
                                    mlp_config=TrainConfig(seed=seed, max_epochs=mlp_epochs))
        C = ConfusionMatrix.from_predictions(yte, clf.predict(Xte), classes)
        out[f"{name}_train_accuracy"] = log["input_accuracy"]
        out[f"{name}_test_accuracy"] = accuracy(C)
    return out


def summarize(results):
    mlp = np.array([r["mlp_test_accuracy"] for r in results])
    svm = np.array([r["svm_test_accuracy"] for r in results])
    return {"n_seeds": len(results), "mlp_wins": int(np.sum(mlp > svm)),
            "mlp_mean": float(mlp.mean()), "svm_mean": float(svm.mean())}
