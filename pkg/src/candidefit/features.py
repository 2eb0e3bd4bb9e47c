"""Classifier inputs: AU8 coefficient vectors, flattened FP68 landmarks, z-scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import N_LANDMARKS

KIND_DIMS = {"au8": 8, "fp68": 2 * N_LANDMARKS}
EPSILON = 1e-8


def kind_for_dim(dim):
    for kind, d in KIND_DIMS.items():
        if d == dim:
            return kind
    raise ValueError(f"no feature kind has dimension {dim}; known: {KIND_DIMS}")


@dataclass(frozen=True)
class FeatureVector:
    kind: str
    values: np.ndarray
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KIND_DIMS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != KIND_DIMS[self.kind]:
            raise ValueError(f"{self.kind} vector needs {KIND_DIMS[self.kind]} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", v)


def fp68_vector(frame):
    """Interleaved ``(x0, y0, x1, y1, ...)`` of the 68 landmarks."""
    return FeatureVector("fp68", np.asarray(frame.points, dtype=float).reshape(-1),
                         getattr(frame, "label", None))


def unflatten_fp68(values):
    return np.asarray(values, dtype=float).reshape(N_LANDMARKS, 2)


def au8_vector(a_action, label=None):
    return FeatureVector("au8", a_action, label)


def stack(vectors):
    """``(X, labels)`` from a sequence of FeatureVectors of one kind."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError("no feature vectors")
    kinds = {v.kind for v in vectors}
    if len(kinds) != 1:
        raise ValueError(f"mixed feature kinds: {sorted(kinds)}")
    return np.array([v.values for v in vectors]), [v.label for v in vectors]


@dataclass(frozen=True)
class NormStats:
    """Per-dimension mean and population standard deviation of a training split."""

    mu: np.ndarray
    sigma: np.ndarray
    epsilon: float = EPSILON

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if mu.shape != sigma.shape:
            raise ValueError("mu and sigma differ in length")
        if np.any(sigma < 0):
            raise ValueError("sigma must be non-negative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def scale(self):
        return np.maximum(self.sigma, self.epsilon)

    def to_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist(), "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mu"], d["sigma"], d.get("epsilon", EPSILON))


def _as_matrix(data):
    if isinstance(data, np.ndarray):
        return np.atleast_2d(np.asarray(data, dtype=float))
    data = list(data)
    if data and isinstance(data[0], FeatureVector):
        return stack(data)[0]
    return np.atleast_2d(np.asarray(data, dtype=float))


def fit_norm(train, epsilon=EPSILON):
    """Mean and population (ddof=0) standard deviation per dimension."""
    X = _as_matrix(train)
    if len(X) < 2:
        raise ValueError("need at least two training samples to fit normalization")
    return NormStats(X.mean(axis=0), X.std(axis=0), epsilon)


def apply_norm(x, stats):
    """``(x - mu) / max(sigma, epsilon)``; accepts a FeatureVector or an array."""
    if isinstance(x, FeatureVector):
        return FeatureVector(x.kind, apply_norm(x.values, stats), x.label)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != stats.mu.size:
        raise ValueError(f"dimension mismatch: features {x.shape[-1]}, stats {stats.mu.size}")
    return (x - stats.mu) / stats.scale


def denormalize(z, stats):
    if isinstance(z, FeatureVector):
        return FeatureVector(z.kind, denormalize(z.values, stats), z.label)
    return np.asarray(z, dtype=float) * stats.scale + stats.mu
