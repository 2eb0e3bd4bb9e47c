"""Rotation vectors, the forward deformation model and closed-form initialization."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

_SMALL_ANGLE = 1e-7


def skew(v):
    """Cross-product matrix ``[v]_x`` so that ``skew(v) @ x == np.cross(v, x)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def canonical_rotation_vector(w):
    """Equivalent rotation vector with angle in [0, pi]."""
    w = np.asarray(w, dtype=float)
    a = np.linalg.norm(w)
    if a <= np.pi:
        return w.copy()
    a_red = np.mod(a, 2 * np.pi)
    u = w / a
    if a_red > np.pi:
        return u * (a_red - 2 * np.pi)
    return u * a_red


def rodrigues(w):
    """Rotation matrix for rotation vector ``w`` (angle ``|w|`` about ``w/|w|``)."""
    w = np.asarray(w, dtype=float)
    a = np.linalg.norm(w)
    W = skew(w)
    if a < _SMALL_ANGLE:
        # sin(a)/a ~ 1 - a^2/6, (1 - cos a)/a^2 ~ 1/2 - a^2/24
        return np.eye(3) + (1 - a * a / 6) * W + (0.5 - a * a / 24) * (W @ W)
    u = w / a
    return np.cos(a) * np.eye(3) + (1 - np.cos(a)) * np.outer(u, u) + np.sin(a) * skew(u)


def inverse_rodrigues(R, atol=1e-9):
    """Rotation vector of ``R`` with angle in [0, pi].

    Angle comes from the trace, axis from the antisymmetric part; near pi the
    antisymmetric part vanishes and the axis is read off the symmetric part.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("not a rotation matrix")
    if (np.linalg.norm(R.T @ R - np.eye(3)) > atol * 10
            or abs(np.linalg.det(R) - 1.0) > atol * 10):
        raise ValueError("not a rotation matrix")
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0  # sin(a) * u
    s = np.linalg.norm(v)
    a = np.arctan2(s, c)
    if a < _SMALL_ANGLE:
        return v * (1 + a * a / 6)
    if np.pi - a > 1e-4:
        return v * (a / s)
    # near pi the antisymmetric part is tiny; the symmetric part is (1 - cos a) u u^T
    S = (R + R.T) / 2.0 - c * np.eye(3)
    k = int(np.argmax(np.diag(S)))
    u = S[:, k] / np.sqrt(S[k, k])
    u /= np.linalg.norm(u)
    if np.dot(u, v) < 0:
        u = -u
    return canonical_rotation_vector(u * a)


def rotation_derivatives(w):
    """The three matrices dR/dw_k, k = 0, 1, 2."""
    w = np.asarray(w, dtype=float)
    a2 = float(w @ w)
    if a2 < _SMALL_ANGLE ** 2:
        # first-order expansion: dR/dw_k = [e_k]_x + ([e_k]_x [w]_x + [w]_x [e_k]_x)/2
        W = skew(w)
        return [skew(e) + 0.5 * (skew(e) @ W + W @ skew(e)) for e in np.eye(3)]
    R = rodrigues(w)
    W = skew(w)
    I_R = np.eye(3) - R
    return [((w[k] * W + skew(np.cross(w, I_R[:, k]))) / a2) @ R for k in range(3)]


@dataclass
class PoseParams:
    """Global scale, rotation vector, xy translation and unit coefficients."""

    s: float
    w: np.ndarray
    t: np.ndarray
    a_shape: np.ndarray
    a_action: np.ndarray

    def __post_init__(self):
        self.s = float(self.s)
        self.w = np.asarray(self.w, dtype=float).reshape(3)
        self.t = np.asarray(self.t, dtype=float).reshape(2)
        self.a_shape = np.asarray(self.a_shape, dtype=float).reshape(-1)
        self.a_action = np.asarray(self.a_action, dtype=float).reshape(-1)
        if not self.s > 0:
            raise ValueError(f"scale must be positive, got {self.s}")
        for name in ("w", "t", "a_shape", "a_action"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def neutral(cls, model, s=1.0, w=(0, 0, 0), t=(0, 0)):
        return cls(s, w, t, np.zeros(model.n_shape), np.zeros(model.n_action))

    def copy(self, **changes):
        out = replace(self, w=self.w.copy(), t=self.t.copy(),
                      a_shape=self.a_shape.copy(), a_action=self.a_action.copy())
        for k, v in changes.items():
            setattr(out, k, v)
        out.__post_init__()
        return out

    def to_dict(self):
        return {"s": self.s, "w": self.w.tolist(), "t": self.t.tolist(),
                "a_shape": self.a_shape.tolist(), "a_action": self.a_action.tolist()}


def _check_len(coeffs, n, what):
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if coeffs.size != n:
        raise ValueError(f"{what} coefficient length {coeffs.size} does not match unit count {n}")
    return coeffs


def forward_global(model, s, w, t, a_shape):
    """Globally moved points: ``s R (P^c + sum_d alpha_d a^d) + t`` with t in xy only."""
    a_shape = _check_len(a_shape, model.n_shape, "shape")
    local = model.vertices + model.shape_basis @ a_shape
    P = s * local @ rodrigues(w).T
    P[:, :2] += np.asarray(t, dtype=float)
    return P


def forward_action(model, global_points, s, w, a_action, indices=None):
    """Add rotated, scaled action-unit motion to globally moved points.

    ``indices`` restricts the result to those vertices (the correspondence points);
    ``global_points`` must then already be restricted the same way.
    """
    a_action = _check_len(a_action, model.n_action, "action")
    basis = model.action_basis if indices is None else model.action_basis[indices]
    return np.asarray(global_points, dtype=float) + s * (basis @ a_action) @ rodrigues(w).T


def project_xy(points):
    """Orthographic projection: drop z."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return np.zeros((0, 2))
    return points[..., :2].copy()


def affine_init(model_xy, target_xy):
    """Isotropic scale and translation that best map ``model_xy`` onto ``target_xy``.

    Returns ``(alpha, gamma)`` minimizing ``sum |alpha * a_i + gamma - b_i|^2``.
    """
    A = np.asarray(model_xy, dtype=float).reshape(-1, 2)
    B = np.asarray(target_xy, dtype=float).reshape(-1, 2)
    if len(A) != len(B):
        raise ValueError("point sets differ in length")
    if len(A) < 2:
        raise ValueError("need at least two points")
    ma, mb = A.mean(axis=0), B.mean(axis=0)
    Ac, Bc = A - ma, B - mb
    denom = float(np.sum(Ac * Ac))
    if denom <= 0.0:
        raise ValueError("zero centered norm")
    alpha = float(np.sum(Ac * Bc)) / denom
    return alpha, mb - alpha * ma


def init_pose(landmarks, model, corr, a_shape=None):
    """Closed-form starting pose: no rotation, zero deformations, LSQ scale and shift.

    ``a_shape`` (default zeros) is held in the returned pose and applied to the
    model points before the scale is estimated.
    """
    pts = landmarks.points if hasattr(landmarks, "points") else np.asarray(landmarks)
    a_shape = np.zeros(model.n_shape) if a_shape is None else _check_len(a_shape, model.n_shape, "shape")
    Pg = forward_global(model, 1.0, np.zeros(3), np.zeros(2), a_shape)[corr.active_3d]
    target = pts[corr.active_2d]
    s, t = affine_init(project_xy(Pg), target)
    if not s > 0:
        raise ValueError(f"initial scale is not positive ({s:.3g}); landmarks may be mirrored")
    return PoseParams(s, np.zeros(3), t, a_shape, np.zeros(model.n_action))
