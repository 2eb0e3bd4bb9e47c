"""Synthetic landmark datasets with ground-truth model parameters.

Frames are rendered by the forward model itself, so every sample carries the
exact scale, rotation, translation and unit coefficients that produced it.
Training frames are frontal (optionally augmented in the landmark domain);
test frames are rendered at yawed head poses.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .fitting import LandmarkFrame
from .geometry import (PoseParams, forward_action, forward_global, inverse_rodrigues, project_xy,
                       rodrigues)
from .model import N_LANDMARKS

# FP68 left-right mirror permutation
FLIP_PERMUTATION = np.array(
    list(range(16, -1, -1))
    + list(range(26, 16, -1))
    + [27, 28, 29, 30]
    + [35, 34, 33, 32, 31]
    + [45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40]
    + [54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55]
    + [64, 63, 62, 61, 60, 67, 66, 65]
)


@dataclass(frozen=True)
class EmotionRecipe:
    label: str
    components: tuple  # ((facs_id, lo, hi), ...)

    def __post_init__(self):
        for fid, lo, hi in self.components:
            if not 0.0 <= lo <= hi <= 1.5:
                raise ValueError(f"{self.label}: intensity range [{lo}, {hi}] for AU{fid} "
                                 "must lie within [0, 1.5]")


def load_recipes(path=None, intensity_range=None):
    """Class recipes from the bundled table (or ``path``), in class order."""
    if path is None:
        raw = json.loads(resources.files("candidefit.data").joinpath("recipes.json").read_text())
    else:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    lo, hi = intensity_range or raw["intensity_range"]
    return {c: EmotionRecipe(c, tuple((int(f), lo, hi) for f in raw["recipes"][c]))
            for c in raw["classes"]}


CLASSES = tuple(load_recipes())


def slot_map(model):
    """FACS id -> action-unit slot, read from names like ``"AU26/27 jaw drop"``."""
    out = {}
    for slot, unit in enumerate(model.action_units):
        for fid in unit.facs_ids:
            out[fid] = slot
    return out


def recipe_slots(recipe, model):
    """Slots touched by a recipe (components without a slot are unobservable)."""
    slots = slot_map(model)
    return sorted({slots[f] for f, _, _ in recipe.components if f in slots})


def sample_recipe(label, rng, model, recipes=None):
    """Action-unit coefficients for one expression of class ``label``.

    Each recipe component drawn uniformly from its range lands on the slot
    that carries its FACS id; when several components share a slot the
    strongest one wins.  Components outside the identified units are dropped.
    """
    recipes = recipes or load_recipes()
    if label not in recipes:
        raise ValueError(f"unknown class {label!r}; expected one of {tuple(recipes)}")
    slots = slot_map(model)
    a = np.zeros(model.n_action)
    for fid, lo, hi in recipes[label].components:
        value = rng.uniform(lo, hi)
        if fid in slots:
            a[slots[fid]] = max(a[slots[fid]], value)
    return a


def yaw_pose(model, s, yaw, t, pitch=0.0, roll=0.0, a_shape=None, a_action=None):
    """PoseParams for a head turned by ``yaw`` (about y), then pitch and roll."""
    R = rodrigues([0.0, 0.0, roll]) @ rodrigues([pitch, 0.0, 0.0]) @ rodrigues([0.0, yaw, 0.0])
    return PoseParams(
        s, inverse_rodrigues(R), t,
        np.zeros(model.n_shape) if a_shape is None else a_shape,
        np.zeros(model.n_action) if a_action is None else a_action,
    )


def render_points(model, corr, params):
    """Noise-free 68 x 2 landmarks for ``params``.

    Correspondence landmarks sit on their vertex; the others use the fixed
    vertex blends of the correspondence file.
    """
    Pg = forward_global(model, params.s, params.w, params.t, params.a_shape)
    P = forward_action(model, Pg, params.s, params.w, params.a_action)
    xy = project_xy(P)
    out = np.full((N_LANDMARKS, 2), np.nan)
    out[corr.active_2d] = xy[corr.active_3d]
    for lm, (vs, ws) in corr.interpolation.items():
        out[lm] = ws @ xy[vs]
    missing = np.flatnonzero(np.isnan(out[:, 0]))
    if missing.size:
        raise ValueError(f"correspondence does not place landmarks {missing.tolist()}")
    return out


def render_frame(model, corr, params, noise_sigma=0.0, rng=None, tau=0, label=None):
    """Render one frame; returns ``(LandmarkFrame, truth_record)``."""
    pts = render_points(model, corr, params)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
    truth = {"tau": int(tau), "label": label, **params.to_dict()}
    return LandmarkFrame(tau, pts, label), truth


@dataclass(frozen=True)
class AugmentConfig:
    """Landmark-domain analogue of an image augmentation pipeline.

    Ranges are ``(lo, hi)`` for uniform draws; a degenerate range forces a value.
    """

    enabled: bool = True
    flip_prob: float = 0.5
    scale: tuple = (0.9, 1.1)
    translate_frac: float = 0.1
    rotate_deg: tuple = (-25.0, 25.0)
    shear_deg: tuple = (-8.0, 8.0)
    noise_sigma: float = 0.0
    resolution: tuple = (640, 480)


NO_AUGMENT = AugmentConfig(enabled=False)


def _flip(pts):
    c = pts.mean(axis=0)
    mirrored = pts.copy()
    mirrored[:, 0] = 2 * c[0] - pts[:, 0]
    return mirrored[FLIP_PERMUTATION]


def augment_landmarks(frame, rng, config=AugmentConfig()):
    """Random flip, scale, translation, rotation and shear applied in random order.

    Scale, rotation and shear act about the current centroid.  Coordinate noise
    (``config.noise_sigma``) is added last.
    """
    if not config.enabled:
        return frame
    pts = np.array(frame.points, dtype=float)
    ops = ["flip", "scale", "translate", "rotate", "shear"]
    for op in rng.permutation(ops):
        c = pts.mean(axis=0)
        if op == "flip":
            if rng.uniform() < config.flip_prob:
                pts = _flip(pts)
        elif op == "scale":
            pts = c + rng.uniform(*config.scale) * (pts - c)
        elif op == "translate":
            rx, ry = config.resolution
            f = config.translate_frac
            pts = pts + np.array([rng.uniform(-f * rx, f * rx), rng.uniform(-f * ry, f * ry)])
        elif op == "rotate":
            th = math.radians(rng.uniform(*config.rotate_deg))
            M = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
            pts = c + (pts - c) @ M.T
        elif op == "shear":
            k = math.tan(math.radians(rng.uniform(*config.shear_deg)))
            M = np.array([[1.0, k], [0.0, 1.0]])
            pts = c + (pts - c) @ M.T
    if config.noise_sigma > 0:
        pts = pts + rng.normal(0.0, config.noise_sigma, size=pts.shape)
    return LandmarkFrame(frame.tau, pts, frame.label)


@dataclass(frozen=True)
class SynthSpec:
    """Dataset design.

    ``identity_sigma`` spreads per-sample shape-unit coefficients (subject
    identity); ``pose_jitter`` bounds random pitch and roll (radians) on every
    frame; ``yaw_jitter`` perturbs the nominal yaw of each frame.
    """

    n_per_class: int = 200
    train_yaw: float = 0.0
    test_yaws: tuple = (-math.pi / 4, math.pi / 4)
    noise_sigma: float = 0.5
    seed: int = 0
    augment: bool = True
    augment_config: AugmentConfig = field(default_factory=AugmentConfig)
    identity_sigma: float = 0.5
    scale_range: tuple = (80.0, 120.0)
    center: tuple = (320.0, 240.0)
    center_jitter: float = 20.0
    pose_jitter: float = 0.05
    yaw_jitter: float = 0.05
    intensity_range: tuple = (0.4, 1.0)

    def __post_init__(self):
        if self.n_per_class <= 0:
            raise ValueError("n_per_class must be positive")
        for yaw in (self.train_yaw, *self.test_yaws):
            if not -math.pi / 2 < yaw < math.pi / 2:
                raise ValueError(f"yaw {yaw} outside (-pi/2, pi/2)")
        if self.noise_sigma < 0 or self.identity_sigma < 0:
            raise ValueError("noise and identity spreads must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["test_yaws"] = list(self.test_yaws)
        return d


@dataclass
class Dataset:
    train: list
    test: list
    truth: list  # one record per frame, train first, with a "split" key

    def split(self, name):
        return self.train if name == "train" else self.test


def _frame_rng(seed, split_id, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), split_id, index]))


def _sample_frame(spec, model, corr, recipes, label, yaw, rng, tau):
    s = rng.uniform(*spec.scale_range)
    t = np.array(spec.center) + rng.uniform(-spec.center_jitter, spec.center_jitter, size=2)
    su = rng.normal(0.0, spec.identity_sigma, size=model.n_shape)
    au = sample_recipe(label, rng, model, recipes)
    j = spec.pose_jitter
    params = yaw_pose(model, s, yaw + rng.uniform(-spec.yaw_jitter, spec.yaw_jitter), t,
                      pitch=rng.uniform(-j, j), roll=rng.uniform(-j, j), a_shape=su, a_action=au)
    return render_frame(model, corr, params, spec.noise_sigma, rng, tau=tau, label=label)


def generate_dataset(spec, model, corr):
    """Class-balanced frontal train split and yawed test split, reproducible from the seed."""
    recipes = load_recipes(intensity_range=spec.intensity_range)
    classes = tuple(recipes)
    train, test, truth = [], [], []
    tau = 0
    for i in range(spec.n_per_class * len(classes)):
        label = classes[i % len(classes)]
        rng = _frame_rng(spec.seed, 0, i)
        frame, rec = _sample_frame(spec, model, corr, recipes, label, spec.train_yaw, rng, tau)
        rec["augmented"] = bool(spec.augment)
        if spec.augment:
            frame = augment_landmarks(frame, rng, spec.augment_config)
        train.append(frame)
        truth.append({"split": "train", "nominal_yaw": spec.train_yaw, **rec})
        tau += 1
    for y, yaw in enumerate(spec.test_yaws):
        for i in range(spec.n_per_class * len(classes)):
            label = classes[i % len(classes)]
            rng = _frame_rng(spec.seed, 1 + y, i)
            frame, rec = _sample_frame(spec, model, corr, recipes, label, yaw, rng, tau)
            rec["augmented"] = False
            test.append(frame)
            truth.append({"split": "test", "nominal_yaw": yaw, **rec})
            tau += 1
    return Dataset(train, test, truth)
