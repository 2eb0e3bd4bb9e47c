"""One-against-one polynomial-kernel SVM trained by SMO."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

TAU = 1e-12


def poly_kernel(X, Y, degree=3, gamma=1.0, coef0=1.0):
    """``(gamma <x, y> + coef0) ** degree`` for all row pairs."""
    return (gamma * np.asarray(X, dtype=float) @ np.asarray(Y, dtype=float).T + coef0) ** degree


def smo(K, y, C=1.0, tol=1e-3, max_iter=None):
    """Solve the soft-margin dual with SMO and maximal-violating-pair selection.

    Minimizes ``0.5 a^T Q a - sum(a)`` with ``Q_ij = y_i y_j K_ij`` subject to
    ``0 <= a_i <= C`` and ``y^T a = 0``.  Stops when the largest KKT violation
    (``m(a) - M(a)``) falls to ``tol``.

    Returns
    -------
    alpha : ndarray
    rho : float
        Offset; the decision function is ``sum_i a_i y_i K(x_i, x) - rho``.
    n_iter : int
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    Q = K * np.outer(y, y)
    diagQ = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        j = int(np.flatnonzero(low)[np.argmin(yG[low])])
        if yG[i] - yG[j] <= tol:
            break
        it += 1
        Qi, Qj = Q[i], Q[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diagQ[i] + diagQ[j] + 2 * Qi[j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(diagQ[i] + diagQ[j] - 2 * Qi[j], TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        G += Qi * (ni - ai) + Qj * (nj - aj)
        alpha[i], alpha[j] = ni, nj
    rho = _offset(alpha, y, G, C)
    return alpha, rho, it


def _offset(alpha, y, G, C):
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].mean())
    ub, lb = np.inf, -np.inf
    for a, yi, v in zip(alpha, y, yG):
        at_upper_like = (yi > 0 and a >= C) or (yi < 0 and a <= 0)
        at_lower_like = (yi > 0 and a <= 0) or (yi < 0 and a >= C)
        if at_upper_like:
            lb = max(lb, v)
        if at_lower_like:
            ub = min(ub, v)
    return float((ub + lb) / 2)


@dataclass
class BinarySvm:
    """Machine separating ``positive`` (y = +1) from ``negative`` (y = -1)."""

    positive: int
    negative: int
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float
    alpha: np.ndarray = field(repr=False, default=None)  # full dual vector
    y: np.ndarray = field(repr=False, default=None)
    n_iter: int = 0


@dataclass
class SvmModel:
    classes: list
    machines: list
    degree: int = 3
    gamma: float = 1.0
    coef0: float = 1.0
    C: float = 1.0

    @property
    def class_pairs(self):
        return [(self.classes[m.positive], self.classes[m.negative]) for m in self.machines]

    def kernel(self, X, Y):
        return poly_kernel(X, Y, self.degree, self.gamma, self.coef0)

    def decision_function(self, X):
        """Pairwise decision values, shape ``(n, n_pairs)``; positive favours the lower class."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        dim = self.machines[0].support_vectors.shape[1] if self.machines else X.shape[1]
        if X.shape[1] != dim:
            raise ValueError(f"dimension mismatch: model expects {dim} features, got {X.shape[1]}")
        cols = []
        for m in self.machines:
            cols.append(self.kernel(X, m.support_vectors) @ m.dual_coef + m.bias)
        return np.column_stack(cols) if cols else np.zeros((len(X), 0))

    def predict_index(self, X):
        D = self.decision_function(X)
        return np.array([vote(row, self.machines, len(self.classes)) for row in D], dtype=int)

    def predict(self, X):
        return [self.classes[i] for i in self.predict_index(X)]

    def to_dict(self):
        return {
            "classes": list(self.classes),
            "kernel": {"degree": self.degree, "gamma": self.gamma, "coef0": self.coef0},
            "C": self.C,
            "machines": [{"positive": m.positive, "negative": m.negative,
                          "support_vectors": m.support_vectors.tolist(),
                          "dual_coef": m.dual_coef.tolist(), "bias": m.bias}
                         for m in self.machines],
        }

    @classmethod
    def from_dict(cls, d):
        k = d["kernel"]
        machines = [BinarySvm(m["positive"], m["negative"],
                              np.asarray(m["support_vectors"], dtype=float).reshape(len(m["dual_coef"]), -1),
                              np.asarray(m["dual_coef"], dtype=float), float(m["bias"]))
                    for m in d["machines"]]
        return cls(list(d["classes"]), machines, int(k["degree"]), float(k["gamma"]),
                   float(k["coef0"]), float(d["C"]))


def vote(decisions, machines, n_classes):
    """One-vs-one vote for one sample.

    Ties on vote count go to the class with the larger summed magnitude of
    its winning decision values, then to the lowest class index.
    """
    votes = np.zeros(n_classes, dtype=int)
    strength = np.zeros(n_classes)
    for d, m in zip(decisions, machines):
        winner = m.positive if d > 0 else m.negative
        votes[winner] += 1
        strength[winner] += abs(d)
    best = np.flatnonzero(votes == votes.max())
    if best.size > 1:
        s = strength[best]
        best = best[s == s.max()]
    return int(best.min())


def svm_train(X, labels, degree=3, gamma=None, coef0=1.0, C=1.0, tol=1e-3, classes=None):
    """Train one binary SVM per unordered class pair.

    ``gamma`` defaults to ``1 / n_features``.  ``classes`` fixes the class
    order (the vote tie-break prefers lower positions); by default the sorted
    distinct labels.
    """
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    if len(X) != len(labels):
        raise ValueError("features and labels differ in length")
    classes = list(classes) if classes is not None else sorted(set(labels))
    present = [c for c in classes if c in set(labels)]
    if len(present) < 2:
        raise ValueError("need at least two classes to train an SVM")
    gamma = 1.0 / X.shape[1] if gamma is None else gamma
    index = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([index[c] for c in labels])
    K = poly_kernel(X, X, degree, gamma, coef0)
    machines = []
    for a, b in combinations(range(len(classes)), 2):
        sel = np.flatnonzero((y_idx == a) | (y_idx == b))
        if not ((y_idx[sel] == a).any() and (y_idx[sel] == b).any()):
            continue
        y = np.where(y_idx[sel] == a, 1.0, -1.0)
        alpha, rho, n_iter = smo(K[np.ix_(sel, sel)], y, C, tol)
        sv = alpha > 0
        machines.append(BinarySvm(a, b, X[sel][sv], (alpha * y)[sv], -rho, alpha, y, n_iter))
    return SvmModel(classes, machines, degree, gamma, coef0, C)


def svm_predict(model, X):
    return model.predict(X)
