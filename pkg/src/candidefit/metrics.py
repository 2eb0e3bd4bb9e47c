"""Accuracy, Cohen's kappa and F-scores from a confusion matrix.

Integer counts are evaluated in exact rational arithmetic and rounded once at
the end, so equal inputs give bit-identical floats regardless of the path
that produced the counts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i, j]``: samples of true class i predicted as class j."""

    counts: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        C = np.asarray(self.counts)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(C < 0):
            raise ValueError("confusion counts must be non-negative")
        if not np.all(C == np.round(C)):
            raise ValueError("confusion counts must be integers")
        C = C.astype(np.int64)
        labels = tuple(self.labels) or tuple(range(C.shape[0]))
        if len(labels) != C.shape[0]:
            raise ValueError("label count does not match matrix size")
        object.__setattr__(self, "counts", C)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_predictions(cls, y_true, y_pred, labels):
        labels = tuple(labels)
        index = {c: i for i, c in enumerate(labels)}
        C = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for t, p in zip(y_true, y_pred):
            C[index[t], index[p]] += 1
        return cls(C, labels)

    @property
    def k(self):
        return self.counts.shape[0]

    @property
    def n(self):
        return int(self.counts.sum())

    def _rows(self):
        return [[int(v) for v in row] for row in self.counts]


def _require_samples(C):
    if C.n <= 0:
        raise ValueError("confusion matrix is empty (N = 0)")


def accuracy(C):
    _require_samples(C)
    return float(Fraction(int(np.trace(C.counts)), C.n))


def _kappa_fraction(C):
    rows = C._rows()
    N = C.n
    p_o = Fraction(sum(rows[k][k] for k in range(C.k)), N)
    p1 = [Fraction(sum(rows[i]), N) for i in range(C.k)]
    p2 = [Fraction(sum(rows[i][j] for i in range(C.k)), N) for j in range(C.k)]
    p_e = sum((a * b for a, b in zip(p1, p2)), Fraction(0))
    return p_o, p_e


def cohens_kappa(C):
    """``(p_o - p_e) / (1 - p_e)`` with chance agreement from the marginals."""
    _require_samples(C)
    p_o, p_e = _kappa_fraction(C)
    if p_e == 1:
        raise ValueError("degenerate marginals: chance agreement p_e = 1")
    return float((p_o - p_e) / (1 - p_e))


def _per_class_fractions(C, warn=True):
    rows = C._rows()
    out = []
    for k in range(C.k):
        tp = rows[k][k]
        row = sum(rows[k])
        col = sum(rows[i][k] for i in range(C.k))
        if warn and (row == 0 or col == 0):
            warnings.warn(f"class {C.labels[k]!r} has no {'samples' if row == 0 else 'predictions'}; "
                          "its undefined precision/recall is taken as 0", RuntimeWarning, stacklevel=3)
        p = Fraction(tp, col) if col else Fraction(0)
        r = Fraction(tp, row) if row else Fraction(0)
        f1 = 2 * p * r / (p + r) if p + r else Fraction(0)
        out.append((p, r, f1, row))
    return out


def per_class(C, warn=True):
    """Per-class precision, recall, F1 and support."""
    _require_samples(C)
    return {str(lbl): {"precision": float(p), "recall": float(r), "f1": float(f), "support": s}
            for lbl, (p, r, f, s) in zip(C.labels, _per_class_fractions(C, warn))}


def weighted_f1(C, warn=True):
    """Per-class F1 averaged with weights equal to true-class support."""
    _require_samples(C)
    stats = _per_class_fractions(C, warn)
    return float(sum((f * s for _, _, f, s in stats), Fraction(0)) / C.n)


def macro_f1(C, warn=True):
    _require_samples(C)
    stats = _per_class_fractions(C, warn)
    return float(sum((f for _, _, f, _ in stats), Fraction(0)) / C.k)


def f_beta(precision, recall, beta=1.0):
    """``(1 + b^2) / (1/precision + b^2/recall)``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if precision < 0 or recall < 0:
        raise ValueError("precision and recall must be non-negative")
    if precision == 0 and recall == 0:
        raise ValueError("F-score undefined for zero precision and zero recall")
    if precision == 0:
        return 0.0
    if recall == 0:
        return 0.0 if beta > 0 else float(precision)
    b2 = beta * beta
    return (1 + b2) / (1 / precision + b2 / recall)


def report(C):
    """The evaluation report dictionary written by ``eval``."""
    return {
        "labels": [str(x) for x in C.labels],
        "confusion": C.counts.tolist(),
        "n": C.n,
        "accuracy": accuracy(C),
        "kappa": cohens_kappa(C),
        "weighted_f1": weighted_f1(C),
        "macro_f1": macro_f1(C, warn=False),
        "per_class": per_class(C, warn=False),
    }
