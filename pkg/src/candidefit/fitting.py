"""Levenberg-Marquardt fitting of the deformable model to 2D landmarks.

The optimization vector is ``[log s, w (3), t (2), a_shape (D), a_action (F)]``;
a boolean mask picks the block that is free in a given phase.  Optimizing
``log s`` keeps the scale positive without constraints.

Residuals are ``projected model point - landmark``, stacked as
``(x0, y0, x1, y1, ...)`` over the active correspondence points, and the
reported error is ``E = 0.5 * |r|^2``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import (PoseParams, canonical_rotation_vector, init_pose, rodrigues,
                       rotation_derivatives)
from .model import N_LANDMARKS

log = logging.getLogger(__name__)

PHASES = ("global", "shape", "action", "all")
DISTRUST_THRESHOLD = 0.25


class FitDivergedError(RuntimeError):
    """A residual became non-finite during optimization."""

    def __init__(self, message, tau=None):
        super().__init__(message if tau is None else f"frame {tau}: {message}")
        self.tau = tau


@dataclass(frozen=True)
class LandmarkFrame:
    """One 68-point observation. ``label`` is optional ground-truth class text."""

    tau: int
    points: np.ndarray
    label: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (N_LANDMARKS, 2):
            raise ValueError(f"frame {self.tau}: expected ({N_LANDMARKS}, 2) points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"frame {self.tau}: landmark coordinates must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "tau", int(self.tau))


def pack(params):
    return np.concatenate([[math.log(params.s)], params.w, params.t, params.a_shape, params.a_action])


def unpack(theta, n_shape):
    return PoseParams(
        s=math.exp(theta[0]), w=theta[1:4], t=theta[4:6],
        a_shape=theta[6:6 + n_shape], a_action=theta[6 + n_shape:],
    )


class ResidualSystem:
    """Residuals and Jacobian of the reprojection error for one phase.

    Parameters
    ----------
    model, corr : CandideModel, Correspondence
    mask : array of bool, length ``6 + D + F``
        Which entries of the packed parameter vector are optimized.
    """

    def __init__(self, model, corr, mask):
        mask = np.asarray(mask, dtype=bool)
        n = 6 + model.n_shape + model.n_action
        if mask.shape != (n,):
            raise ValueError(f"mask must have length {n}")
        if not mask.any():
            raise ValueError("at least one parameter must be free")
        self.model = model
        self.corr = corr
        self.mask = mask
        idx = corr.active_3d
        self._idx2d = corr.active_2d
        self._vertices = model.vertices[idx]
        self._shape = model.shape_basis[idx]    # (N, 3, D)
        self._action = model.action_basis[idx]  # (N, 3, F)

    @classmethod
    def for_phase(cls, model, corr, phase):
        """Mask presets: ``global`` (s, w, t), ``shape`` (+ shape units),
        ``action`` (+ action units) and ``all``."""
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}; expected one of {PHASES}")
        D, F = model.n_shape, model.n_action
        mask = np.zeros(6 + D + F, dtype=bool)
        mask[:6] = True
        if phase in ("shape", "all"):
            mask[6:6 + D] = True
        if phase in ("action", "all"):
            mask[6 + D:] = True
        return cls(model, corr, mask)

    @property
    def n_residuals(self):
        return 2 * self.corr.n_active

    def _local(self, theta):
        D = self.model.n_shape
        return self._vertices + self._shape @ theta[6:6 + D] + self._action @ theta[6 + D:]

    def residuals_full(self, theta, target):
        """Residual vector for the full packed parameter vector ``theta``."""
        s = math.exp(theta[0])
        R = rodrigues(theta[1:4])
        P = s * self._local(theta) @ R.T
        xy = P[:, :2] + theta[4:6]
        return (xy - target).ravel()

    def jacobian_full(self, theta):
        """Analytic Jacobian (2N x (6 + D + F)) for the full parameter vector."""
        D = self.model.n_shape
        s = math.exp(theta[0])
        w = theta[1:4]
        R = rodrigues(w)
        local = self._local(theta)
        N = len(local)
        J = np.empty((2 * N, theta.size))
        J[:, 0] = (s * local @ R.T)[:, :2].ravel()
        for k, dR in enumerate(rotation_derivatives(w)):
            J[:, 1 + k] = (s * local @ dR.T)[:, :2].ravel()
        J[:, 4] = np.tile([1.0, 0.0], N)
        J[:, 5] = np.tile([0.0, 1.0], N)
        sR2 = s * R[:2]  # (2, 3)
        J[:, 6:6 + D] = np.einsum("ij,njd->nid", sR2, self._shape).reshape(2 * N, -1)
        J[:, 6 + D:] = np.einsum("ij,njd->nid", sR2, self._action).reshape(2 * N, -1)
        return J

    def target(self, frame):
        pts = frame.points if hasattr(frame, "points") else np.asarray(frame, dtype=float)
        return pts[self._idx2d]


def residuals(params, frame, model, corr):
    """Reprojection residuals ``P_i|xy - p_j(i)`` stacked over the active points."""
    system = ResidualSystem.for_phase(model, corr, "all")
    return system.residuals_full(pack(params), system.target(frame))


def reprojection_error(params, frame, model, corr):
    """``E = 0.5 * sum |P_i|xy - p_j(i)|^2``."""
    r = residuals(params, frame, model, corr)
    return 0.5 * float(r @ r)


@dataclass
class LMSettings:
    lambda0: float = 1e-3
    up: float = 10.0
    down: float = 10.0
    tol_g: float = 1e-10
    tol_x: float = 1e-12
    max_iter: int = 200


@dataclass
class FitResult:
    params: PoseParams
    error: float
    iterations: int
    rmse: float
    reason: str
    history: list = field(default_factory=list)
    tau: int | None = None

    def to_record(self):
        """The per-frame JSON record."""
        p = self.params
        return {"tau": self.tau, "s": p.s, "w": p.w.tolist(), "t": p.t.tolist(),
                "a_shape": p.a_shape.tolist(), "a_action": p.a_action.tolist(),
                "rmse": self.rmse, "iterations": self.iterations}


def lm_minimize(system, init, frame, settings=None):
    """Minimize the reprojection error over the free parameters of ``system``.

    Damping is Marquardt's: the normal matrix diagonal (floored) scaled by
    lambda, which is multiplied by ``settings.up`` after a rejected step and
    divided by ``settings.down`` after an accepted one.  ``history`` holds the
    error after every accepted step, starting with the initial error.
    """
    cfg = settings or LMSettings()
    target = system.target(frame)
    tau = getattr(frame, "tau", None)
    theta = pack(init)
    free = system.mask
    x = theta[free].copy()

    def evaluate(xv):
        th = theta.copy()
        th[free] = xv
        r = system.residuals_full(th, target)
        if not np.all(np.isfinite(r)):
            raise FitDivergedError("diverged: non-finite residual", tau)
        return th, r

    th, r = evaluate(x)
    E = 0.5 * float(r @ r)
    history = [E]
    lam = cfg.lambda0
    reason = "max_iter"
    it = 0
    J = system.jacobian_full(th)[:, free]
    while it < cfg.max_iter:
        g = J.T @ r
        if np.max(np.abs(g)) <= cfg.tol_g:
            reason = "gradient"
            break
        it += 1
        A = J.T @ J
        d = np.diag(A).copy()
        d = np.maximum(d, 1e-12 * max(float(d.max()), 1.0))
        step = np.linalg.solve(A + lam * np.diag(d), -g)
        if np.linalg.norm(step) <= cfg.tol_x * (np.linalg.norm(x) + cfg.tol_x):
            reason = "step"
            break
        th_new, r_new = evaluate(x + step)
        E_new = 0.5 * float(r_new @ r_new)
        if E_new < E:
            x, th, r, E = x + step, th_new, r_new, E_new
            history.append(E)
            lam = max(lam / cfg.down, 1e-15)
            J = system.jacobian_full(th)[:, free]
        else:
            lam *= cfg.up
            if lam > 1e30:
                reason = "stalled"
                break
    params = unpack(th, system.model.n_shape)
    params.w = canonical_rotation_vector(params.w)
    rmse = math.sqrt(2.0 * E / system.corr.n_active)
    return FitResult(params, E, it, rmse, reason, history, tau)


# -- two-phase protocol ------------------------------------------------------


def fit_frame(frame, model, corr, phase="action", a_shape=None, init=None, settings=None):
    """Fit one frame: pose-only LM from the closed-form start, then ``phase``.

    Shape coefficients are frozen at ``a_shape`` (zeros by default) unless the
    phase frees them.
    """
    start = init if init is not None else init_pose(frame, model, corr, a_shape=a_shape)
    res = lm_minimize(ResidualSystem.for_phase(model, corr, "global"), start, frame, settings)
    if phase == "global":
        return res
    first = res.iterations
    res = lm_minimize(ResidualSystem.for_phase(model, corr, phase), res.params, frame, settings)
    res.iterations += first
    return res


def fit_frames(frames, model, corr, phase="action", a_shape=None, workers=1,
               settings=None, skip_diverged=False):
    """Fit frames independently; results keep input order.

    With ``skip_diverged`` the diverged frames come back as ``FitDivergedError``
    instances instead of raising.
    """
    def one(frame):
        try:
            return fit_frame(frame, model, corr, phase, a_shape, settings=settings)
        except FitDivergedError as exc:
            if skip_diverged:
                return exc
            raise

    if workers <= 1 or len(frames) < 2:
        return [one(f) for f in frames]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, frames))


def distrust(mu, sigma):
    """Probability mass of N(mu, sigma^2) lying closer to zero than to ``mu``.

    Both sign branches reduce to ``Phi(-|mu| / (2 sigma))``.  ``sigma = 0``
    gives 0 for nonzero ``mu`` and 0.5 for ``mu = 0``.
    """
    mu, sigma = float(mu), float(sigma)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if mu == 0.0:
        return 0.5
    if sigma == 0.0:
        return 0.0
    z = -abs(mu) / (2.0 * sigma)
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@dataclass(frozen=True)
class DistrustRecord:
    unit_name: str
    mean: float
    variance: float
    sigma: float
    distrust: float

    @classmethod
    def from_stats(cls, name, mean, variance):
        sigma = math.sqrt(max(variance, 0.0))
        return cls(name, float(mean), float(variance), sigma, distrust(mean, sigma))


def rank_by_distrust(records):
    return sorted(records, key=lambda r: (r.distrust, r.unit_name))


def select_trusted(records, threshold=DISTRUST_THRESHOLD):
    return [r for r in records if r.distrust < threshold]


@dataclass
class Personalization:
    """Outcome of personalization: frozen shape coefficients and their statistics."""

    shape_coeffs: np.ndarray
    records: list
    n_frames: int
    dropped: list = field(default_factory=list)
    threshold: float = DISTRUST_THRESHOLD

    def to_dict(self):
        return {
            "shape_coeffs": self.shape_coeffs.tolist(),
            "threshold": self.threshold,
            "n_frames": self.n_frames,
            "dropped": list(self.dropped),
            "records": [r.__dict__ for r in self.records],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["shape_coeffs"], dtype=float),
                   [DistrustRecord(**r) for r in d["records"]],
                   int(d["n_frames"]), list(d.get("dropped", [])),
                   float(d.get("threshold", DISTRUST_THRESHOLD)))


def personalize(neutral_frames, model, corr, threshold=DISTRUST_THRESHOLD, workers=1, settings=None):
    """Fit shape units on neutral frames and keep the trusted ones.

    Each frame gets pose plus shape-unit coefficients; per unit the sample mean
    and unbiased variance across frames give a distrust score.  Units with
    distrust below ``threshold`` keep their mean, the rest are zeroed.
    Frames whose fit diverges are dropped and listed in ``dropped``.
    """
    frames = list(neutral_frames)
    if len(frames) < 2:
        raise ValueError("insufficient frames for statistics (need at least 2 neutral frames)")
    fits = fit_frames(frames, model, corr, phase="shape", workers=workers,
                      settings=settings, skip_diverged=True)
    dropped = [f.tau for f, r in zip(frames, fits) if isinstance(r, FitDivergedError)]
    for tau in dropped:
        log.warning("frame %s diverged; dropped from shape statistics", tau)
    coeffs = np.array([r.params.a_shape for r in fits if not isinstance(r, FitDivergedError)])
    if len(coeffs) < 2:
        raise ValueError("insufficient frames for statistics after dropping diverged fits")
    mean = coeffs.mean(axis=0)
    var = coeffs.var(axis=0, ddof=1)
    records = rank_by_distrust(
        DistrustRecord.from_stats(name, m, v) for name, m, v in zip(model.shape_names, mean, var))
    trusted = {r.unit_name for r in select_trusted(records, threshold)}
    keep = np.array([name in trusted for name in model.shape_names])
    return Personalization(np.where(keep, mean, 0.0), records, len(coeffs), dropped, threshold)


def extract_action_units(frames, model, corr, a_shape=None, workers=1, settings=None):
    """Per-frame action-unit coefficients with shape units frozen at ``a_shape``.

    Returns an array of shape ``(n_frames, F)``.
    """
    fits = fit_frames(list(frames), model, corr, phase="action", a_shape=a_shape,
                      workers=workers, settings=settings)
    return np.array([r.params.a_action for r in fits]).reshape(len(fits), model.n_action)


def format_distrust_table(records, threshold=DISTRUST_THRESHOLD):
    """Plain-text table sorted by distrust with a rule at ``threshold``."""
    lines = [f"{'Distrust':>9} {'Mean':>8} {'Variance':>9} {'Sigma':>7}  Coefficient name",
             "=" * 60]
    ruled = False
    for r in rank_by_distrust(records):
        if not ruled and r.distrust >= threshold:
            lines.append("-" * 60)
            ruled = True
        lines.append(f"{r.distrust:9.3f} {r.mean:8.3f} {r.variance:9.3f} {r.sigma:7.3f}  {r.unit_name}")
    lines.append("=" * 60)
    return "\n".join(lines)
