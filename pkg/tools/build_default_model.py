"""Regenerate the bundled default model and correspondence files.

The geometry is a hand-curated low-polygon head in the spirit of Candide-3:
coordinates live in [-1, 1]^3 with x to the viewer's right, y up and z toward
the viewer.  Deformation displacements are chosen so that every unit touches
the landmark-bearing vertices with a distinct pattern.

Usage::

    python tools/build_default_model.py src/candidefit/data
"""

import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay



def _fp68_positions():
    """Mean-face 3D positions of the FP68 layout (mirror-symmetric in x)."""
    p = {}
    for k in range(17):
        phi = np.pi * k / 16
        p[k] = (-0.78 * np.cos(phi), 0.1 - 1.05 * np.sin(phi), -0.35 + 0.6 * np.sin(phi))
    for n, u in enumerate(np.linspace(0.0, 1.0, 5)):
        x = -0.62 + 0.5 * u
        p[17 + n] = (x, 0.35 + 0.07 * np.sin(np.pi * u), 0.25 + 0.1 * u)
        p[26 - n] = (-x, 0.35 + 0.07 * np.sin(np.pi * u), 0.25 + 0.1 * u)
    for n, (y, z) in enumerate([(0.25, 0.35), (0.12, 0.45), (-0.01, 0.55), (-0.14, 0.62)]):
        p[27 + n] = (0.0, y, z)
    for n, (x, y, z) in enumerate(
        [(-0.16, -0.22, 0.40), (-0.08, -0.25, 0.47), (0.0, -0.27, 0.52),
         (0.08, -0.25, 0.47), (0.16, -0.22, 0.40)]
    ):
        p[31 + n] = (x, y, z)
    right_eye = [(-0.49, 0.20, 0.22), (-0.40, 0.25, 0.27), (-0.30, 0.25, 0.29),
                 (-0.21, 0.20, 0.30), (-0.30, 0.15, 0.29), (-0.40, 0.15, 0.27)]
    for n, q in enumerate(right_eye):
        p[36 + n] = q
    # left eye: 42 inner, 43, 44, 45 outer, 46, 47
    mirror = {42: 39, 43: 38, 44: 37, 45: 36, 46: 41, 47: 40}
    for k, src in mirror.items():
        x, y, z = p[src]
        p[k] = (-x, y, z)
    outer = [(-0.28, -0.52, 0.30), (-0.18, -0.45, 0.38), (-0.07, -0.42, 0.44),
             (0.0, -0.43, 0.45), (0.07, -0.42, 0.44), (0.18, -0.45, 0.38),
             (0.28, -0.52, 0.30), (0.18, -0.60, 0.37), (0.07, -0.64, 0.42),
             (0.0, -0.65, 0.43), (-0.07, -0.64, 0.42), (-0.18, -0.60, 0.37)]
    for n, q in enumerate(outer):
        p[48 + n] = q
    inner = [(-0.24, -0.52, 0.33), (-0.08, -0.49, 0.42), (0.0, -0.49, 0.43),
             (0.08, -0.49, 0.42), (0.24, -0.52, 0.33), (0.08, -0.55, 0.41),
             (0.0, -0.56, 0.42), (-0.08, -0.55, 0.41)]
    for n, q in enumerate(inner):
        p[60 + n] = q
    return {k: np.array(v, dtype=float) for k, v in p.items()}


CORR_FP68 = [0, 4, 8, 12, 16,
             17, 19, 21, 22, 24, 26,
             30, 31, 33, 35,
             36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47,
             48, 50, 51, 52, 54, 56, 57, 58, 62, 66]

# Non-landmark head vertices.
EXTRA = {
    "head_top": (0.0, 1.0, 0.0),
    "forehead": (0.0, 0.72, 0.30),
    "forehead_r": (-0.45, 0.66, 0.15),
    "forehead_l": (0.45, 0.66, 0.15),
    "temple_r": (-0.75, 0.45, -0.20),
    "temple_l": (0.75, 0.45, -0.20),
    "ear_r": (-0.86, 0.05, -0.45),
    "ear_l": (0.86, 0.05, -0.45),
    "cheek_r": (-0.50, -0.10, 0.30),
    "cheek_l": (0.50, -0.10, 0.30),
    "lcheek_r": (-0.45, -0.45, 0.25),
    "lcheek_l": (0.45, -0.45, 0.25),
    "nose_root": (0.0, 0.25, 0.35),
    "nose_wing_r": (-0.20, -0.12, 0.35),
    "nose_wing_l": (0.20, -0.12, 0.35),
    "chin_front": (0.0, -0.82, 0.38),
    "jaw_mid_r": (-0.62, -0.55, -0.05),
    "jaw_mid_l": (0.62, -0.55, -0.05),
    "crown_back": (0.0, 0.60, -0.80),
    "occiput": (0.0, 0.10, -0.95),
    "back_r": (-0.55, 0.30, -0.75),
    "back_l": (0.55, 0.30, -0.75),
    "neck_back": (0.0, -0.60, -0.60),
    "neck_r": (-0.40, -0.95, -0.30),
    "neck_l": (0.40, -0.95, -0.30),
}

# interpolation rules for the 31 non-correspondence FP68 points: fp68 -> [(source, weight)]
# source is an fp68 index (resolved to its vertex) or an EXTRA name.
INTERP = {}
for a, b in [(0, 4), (4, 8), (8, 12), (12, 16)]:
    for k in range(a + 1, b):
        w = (k - a) / (b - a)
        INTERP[k] = [(a, 1 - w), (b, w)]
INTERP.update({
    18: [(17, 0.5), (19, 0.5)], 20: [(19, 0.5), (21, 0.5)],
    23: [(22, 0.5), (24, 0.5)], 25: [(24, 0.5), (26, 0.5)],
    27: [("nose_root", 1.0)],
    28: [("nose_root", 2 / 3), (30, 1 / 3)],
    29: [("nose_root", 1 / 3), (30, 2 / 3)],
    32: [(31, 0.5), (33, 0.5)], 34: [(33, 0.5), (35, 0.5)],
    49: [(48, 0.5), (50, 0.5)], 53: [(52, 0.5), (54, 0.5)],
    55: [(54, 0.5), (56, 0.5)], 59: [(58, 0.5), (48, 0.5)],
    60: [(48, 0.8), (62, 0.1), (66, 0.1)], 64: [(54, 0.8), (62, 0.1), (66, 0.1)],
    61: [(62, 0.5), (50, 0.5)], 63: [(62, 0.5), (52, 0.5)],
    65: [(66, 0.5), (56, 0.5)], 67: [(66, 0.5), (58, 0.5)],
})

R_EYE = [36, 37, 38, 39, 40, 41]
L_EYE = [42, 43, 44, 45, 46, 47]
BROWS = [17, 19, 21, 22, 24, 26]
MOUTH = [48, 50, 51, 52, 54, 56, 57, 58, 62, 66]
NOSE = [30, 31, 33, 35]


def _sx(k, dx):
    """Signed x displacement pointing away from the midline for vertex k."""
    return -dx if k in (0, 4, 17, 19, 21, 36, 37, 38, 39, 40, 41, 48, 50, 58, 31) else dx


SHAPE_UNITS = [
    ("eyes width", {36: (-0.04, 0, 0), 39: (0.03, 0, 0), 45: (0.04, 0, 0), 42: (-0.03, 0, 0),
                    37: (-0.01, 0, 0), 41: (-0.01, 0, 0), 44: (0.01, 0, 0), 46: (0.01, 0, 0)}),
    ("nose pointing up", {30: (0, 0.05, -0.02), 31: (0, 0.02, 0), 33: (0, 0.04, -0.01),
                          35: (0, 0.02, 0), "nose_root": (0, 0, 0.01)}),
    ("chin width", {4: (-0.06, 0, 0), 12: (0.06, 0, 0), 0: (-0.01, 0, 0), 16: (0.01, 0, 0),
                    "jaw_mid_r": (-0.04, 0, 0), "jaw_mid_l": (0.04, 0, 0)}),
    ("eyes separation distance", {k: (_sx(k, 0.04), 0, 0) for k in R_EYE + L_EYE}),
    ("nose z extension", {30: (0, -0.02, 0.10), 31: (0, -0.01, 0.05), 33: (0, -0.015, 0.08),
                          35: (0, -0.01, 0.05), "nose_root": (0, 0, 0.03)}),
    ("eyes height", {37: (0, 0.03, 0), 38: (0, 0.03, 0), 43: (0, 0.03, 0), 44: (0, 0.03, 0),
                     40: (0, -0.03, 0), 41: (0, -0.03, 0), 46: (0, -0.03, 0), 47: (0, -0.03, 0)}),
    ("head height", {8: (0, -0.05, 0), 4: (0, -0.03, 0), 12: (0, -0.03, 0),
                     "head_top": (0, 0.08, 0), "forehead": (0, 0.05, 0), "chin_front": (0, -0.05, 0)}),
    ("eyes vertical position", {k: (0, 0.05, 0) for k in R_EYE + L_EYE}),
    ("jaw depth", {4: (0, -0.01, 0.10), 8: (0, -0.01, 0.10), 12: (0, -0.01, 0.10),
                   "chin_front": (0, 0, 0.10)}),
    ("mouth vertical position", {k: (0, 0.04, 0) for k in MOUTH}),
    ("nose vertical position", {**{k: (0, 0.04, 0) for k in NOSE}, "nose_wing_r": (0, 0.04, 0),
                                "nose_wing_l": (0, 0.04, 0)}),
    ("eyes vertical difference", {**{k: (0, 0.03, 0) for k in R_EYE}, **{k: (0, -0.03, 0) for k in L_EYE}}),
    ("mouth width", {48: (-0.05, 0, 0), 54: (0.05, 0, 0), 50: (-0.02, 0, 0), 52: (0.02, 0, 0),
                     56: (0.02, 0, 0), 58: (-0.02, 0, 0)}),
    ("eyes depth", {k: (0, 0, -0.08) for k in R_EYE + L_EYE}),
    ("eyebrows vertical position", {k: (0, 0.05, 0) for k in BROWS}),
]

ACTION_UNITS = [
    ("AU26/27 jaw drop", {4: (0, -0.07, -0.01), 8: (0, -0.15, -0.03), 12: (0, -0.07, -0.01),
                          56: (0, -0.15, -0.02), 57: (0, -0.16, -0.02), 58: (0, -0.15, -0.02),
                          66: (0, -0.14, -0.02), 48: (0, -0.04, 0), 54: (0, -0.04, 0),
                          "chin_front": (0, -0.15, -0.03)}),
    ("AU4 brow lowerer", {17: (0, -0.04, 0), 19: (0, -0.06, 0), 21: (0.02, -0.06, 0),
                          22: (-0.02, -0.06, 0), 24: (0, -0.06, 0), 26: (0, -0.04, 0)}),
    ("AU13/15 lip corner depressor", {48: (0, -0.06, 0), 54: (0, -0.06, 0),
                                      56: (0, -0.02, 0), 58: (0, -0.02, 0)}),
    ("AU10 upper lip raiser", {50: (0, 0.06, 0.01), 51: (0, 0.06, 0.01), 52: (0, 0.06, 0.01),
                               62: (0, 0.05, 0), 48: (0, 0.02, 0), 54: (0, 0.02, 0)}),
    ("AU20 lip stretcher", {48: (-0.07, -0.01, -0.01), 54: (0.07, -0.01, -0.01),
                            50: (-0.02, 0, 0), 52: (0.02, 0, 0), 56: (0.02, 0, 0), 58: (-0.02, 0, 0)}),
    ("AU7 lid tightener", {40: (0, 0.03, 0), 41: (0, 0.03, 0), 46: (0, 0.03, 0), 47: (0, 0.03, 0),
                           37: (0, -0.01, 0), 38: (0, -0.01, 0), 43: (0, -0.01, 0), 44: (0, -0.01, 0)}),
    ("AU9 nose wrinkler", {30: (0, 0.03, 0), 31: (0.01, 0.03, 0), 33: (0, 0.03, 0), 35: (-0.01, 0.03, 0),
                           21: (0, -0.02, 0), 22: (0, -0.02, 0), 51: (0, 0.02, 0)}),
    ("AU42/43/44/45 eyes closed", {37: (0, -0.09, 0), 38: (0, -0.09, 0), 43: (0, -0.09, 0),
                                   44: (0, -0.09, 0), 36: (0, -0.01, 0), 45: (0, -0.01, 0)}),
]


def build(out_dir):
    fp = _fp68_positions()
    names = [f"fp{k}" for k in CORR_FP68] + list(EXTRA)
    coords = [fp[k] for k in CORR_FP68] + [np.array(v, dtype=float) for v in EXTRA.values()]
    index = {}
    for n, k in enumerate(CORR_FP68):
        index[k] = n
    for n, name in enumerate(EXTRA):
        index[name] = len(CORR_FP68) + n
    V = np.array(coords)
    assert np.all(np.abs(V) <= 1.0)
    tri = Delaunay(V[:, :2]).simplices
    tri = sorted(tuple(int(i) for i in t) for t in tri)

    lines = ["# Candide-style low-polygon head, generated by tools/build_default_model.py",
             "# coordinates: x right, y up, z toward the viewer, normalized to [-1, 1]",
             f"VERTICES {len(V)}"]
    for name, v in zip(names, V):
        lines.append(f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f}  # {name}")
    lines.append(f"TRIANGLES {len(tri)}")
    lines += [f"{a} {b} {c}" for a, b, c in tri]
    for header, units in (("SHAPE_UNITS", SHAPE_UNITS), ("ACTION_UNITS", ACTION_UNITS)):
        lines.append(f"{header} {len(units)}")
        for name, targets in units:
            lines.append(f"unit {name}")
            for key, d in targets.items():
                lines.append(f"target {index[key]} {d[0]:.6f} {d[1]:.6f} {d[2]:.6f}")
    Path(out_dir, "candide_default.txt").write_text("\n".join(lines) + "\n")

    corr = ["# FP68 landmark -> model vertex (37 salient points)",
            "# interp lines place the other 31 landmarks at fixed vertex blends"]
    corr += [f"{k} {index[k]}" for k in CORR_FP68]
    for k in sorted(INTERP):
        parts = " ".join(f"{index[s]} {w:.6f}" for s, w in INTERP[k])
        corr.append(f"interp {k} {parts}")
    Path(out_dir, "correspondence_default.txt").write_text("\n".join(corr) + "\n")


if __name__ == "__main__":
    build(sys.argv[1] if len(sys.argv) > 1 else "src/candidefit/data")
