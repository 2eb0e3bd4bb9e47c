"""Static head geometry, deformation units and the landmark correspondence.

Model files are line-oriented text::

    # comment
    VERTICES [count]
    x y z
    TRIANGLES [count]
    i j k
    SHAPE_UNITS [count]
    unit <name>
    target <vertex> <dx> <dy> <dz>
    ACTION_UNITS [count]
    ...

Counts on section headers are optional; when present they are checked.
Trailing ``# ...`` on a data line is treated as a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

N_LANDMARKS = 68
N_SALIENT = 37

_SECTIONS = ("VERTICES", "TRIANGLES", "SHAPE_UNITS", "ACTION_UNITS")


class ModelFormatError(ValueError):
    """Raised when a model or correspondence file is malformed or inconsistent."""

    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if lineno is not None:
                where += f":{lineno}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class DeformationUnit:
    """A named set of per-vertex displacement vectors scaled by one coefficient."""

    name: str
    indices: np.ndarray  # (m,) int
    displacements: np.ndarray  # (m, 3)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        disp = np.asarray(self.displacements, dtype=float).reshape(-1, 3)
        if idx.size == 0:
            raise ModelFormatError(f"unit {self.name!r} has no targets")
        if idx.size != disp.shape[0]:
            raise ModelFormatError(f"unit {self.name!r}: index/displacement count mismatch")
        if np.unique(idx).size != idx.size:
            raise ModelFormatError(f"unit {self.name!r} repeats a vertex index")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "displacements", disp)

    @property
    def facs_ids(self):
        """FACS ids encoded in a name such as ``"AU26/27 jaw drop"``."""
        m = re.match(r"AU([\d/]+)", self.name)
        if not m:
            return ()
        return tuple(int(x) for x in m.group(1).split("/") if x)

    def dense(self, n_vertices):
        out = np.zeros((n_vertices, 3))
        out[self.indices] = self.displacements
        return out

    def __eq__(self, other):
        if not isinstance(other, DeformationUnit):
            return NotImplemented
        return (self.name == other.name
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.displacements, other.displacements))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CandideModel:
    """Mean 3D vertex cloud with triangles, shape units and action units."""

    vertices: np.ndarray  # (G, 3)
    triangles: np.ndarray  # (T, 3) int
    shape_units: tuple = ()
    action_units: tuple = ()
    _shape_basis: np.ndarray = field(init=False, repr=False)
    _action_basis: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "shape_units", tuple(self.shape_units))
        object.__setattr__(self, "action_units", tuple(self.action_units))
        self._validate()
        n = len(v)
        # (G, 3, D) stacks: column d holds unit d's displacement of every vertex
        sb = np.stack([u.dense(n) for u in self.shape_units], axis=-1) if self.shape_units \
            else np.zeros((n, 3, 0))
        ab = np.stack([u.dense(n) for u in self.action_units], axis=-1) if self.action_units \
            else np.zeros((n, 3, 0))
        for arr in (v, t, sb, ab):
            arr.setflags(write=False)
        object.__setattr__(self, "_shape_basis", sb)
        object.__setattr__(self, "_action_basis", ab)

    def _validate(self):
        v, t = self.vertices, self.triangles
        if len(v) == 0:
            raise ModelFormatError("model has no vertices")
        if not np.all(np.isfinite(v)):
            raise ModelFormatError("vertex coordinates must be finite")
        if np.any(np.abs(v) > 1.0):
            bad = int(np.argmax(np.abs(v).max(axis=1)))
            raise ModelFormatError(f"vertex {bad} lies outside the cube [-1, 1]^3")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ModelFormatError(f"triangle index out of range (vertex count {len(v)})")
        for u in self.shape_units + self.action_units:
            if u.indices.min() < 0 or u.indices.max() >= len(v):
                raise ModelFormatError(f"unit {u.name!r}: vertex index out of range "
                                       f"(vertex count {len(v)})")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_shape(self):
        return len(self.shape_units)

    @property
    def n_action(self):
        return len(self.action_units)

    @property
    def shape_basis(self):
        """Array (G, 3, D) of shape-unit displacements."""
        return self._shape_basis

    @property
    def action_basis(self):
        """Array (G, 3, F) of action-unit displacements."""
        return self._action_basis

    @property
    def shape_names(self):
        return [u.name for u in self.shape_units]

    @property
    def action_names(self):
        return [u.name for u in self.action_units]

    def __eq__(self, other):
        if not isinstance(other, CandideModel):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
                and self.shape_units == other.shape_units
                and self.action_units == other.action_units)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Correspondence:
    """The 37 FP68-to-vertex pairs plus interpolation rules for the other landmarks.

    ``interpolation`` maps an FP68 index to ``(vertex_indices, weights)``; it is
    only used to synthesize a full 68-point frame, never during fitting.
    """

    pairs: tuple  # ((fp68_index, vertex_index), ...)
    interpolation: dict = field(default_factory=dict)

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        lm = np.array([a for a, _ in pairs], dtype=np.int64)
        vx = np.array([b for _, b in pairs], dtype=np.int64)
        lm.setflags(write=False)
        vx.setflags(write=False)
        object.__setattr__(self, "_landmarks", lm)
        object.__setattr__(self, "_vertices", vx)

    @property
    def active_2d(self):
        """FP68 indices of the active salient points, aligned with :attr:`active_3d`."""
        return self._landmarks

    @property
    def active_3d(self):
        """Model vertex indices matched to :attr:`active_2d`."""
        return self._vertices

    @property
    def n_active(self):
        return len(self.pairs)

    def core_points(self, model):
        """Vertices matched to landmarks that no deformation unit moves."""
        moved = set()
        for u in model.shape_units + model.action_units:
            moved.update(u.indices.tolist())
        return np.array([v for v in self._vertices if v not in moved], dtype=np.int64)

    def global_deformation_points(self, model):
        """Core points joined with every shape-unit vertex."""
        pts = set(self.core_points(model).tolist())
        for u in model.shape_units:
            pts.update(u.indices.tolist())
        return np.array(sorted(pts), dtype=np.int64)

    def landmark_of(self, vertex):
        hits = np.flatnonzero(self._vertices == vertex)
        if hits.size == 0:
            raise KeyError(vertex)
        return int(self._landmarks[hits[0]])


def _strip(line):
    return line.split("#", 1)[0].strip()


def _floats(tokens, path, lineno, n):
    if len(tokens) != n:
        raise ModelFormatError(f"expected {n} numbers, got {len(tokens)}", path, lineno)
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ModelFormatError(f"cannot parse numbers from {' '.join(tokens)!r}", path, lineno)


def parse_model(text, path="<string>"):
    """Parse model text; see the module docstring for the format."""
    section = None
    declared = {}
    vertices, triangles = [], []
    units = {"SHAPE_UNITS": [], "ACTION_UNITS": []}
    current = None  # (name, indices, displacements, lineno)

    def close_unit():
        nonlocal current
        if current is not None:
            name, idx, disp, ln = current
            try:
                units[section_of_current].append(DeformationUnit(name, idx, disp))
            except ModelFormatError as exc:
                raise ModelFormatError(str(exc), path, ln) from None
            current = None

    section_of_current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head in _SECTIONS:
            close_unit()
            section = head
            if len(tokens) > 1:
                try:
                    declared[section] = (int(tokens[1]), lineno)
                except ValueError:
                    raise ModelFormatError(f"bad count on section header {head}", path, lineno)
            continue
        if section is None:
            raise ModelFormatError(f"data before any section header: {line!r}", path, lineno)
        if section == "VERTICES":
            vertices.append(_floats(tokens, path, lineno, 3))
        elif section == "TRIANGLES":
            try:
                tri = [int(t) for t in tokens]
            except ValueError:
                raise ModelFormatError(f"triangle indices must be integers: {line!r}", path, lineno)
            if len(tri) != 3:
                raise ModelFormatError("a triangle needs exactly 3 indices", path, lineno)
            if min(tri) < 0 or max(tri) >= len(vertices):
                raise ModelFormatError(
                    f"triangle index out of range ({max(tri)} with {len(vertices)} vertices)",
                    path, lineno)
            triangles.append(tri)
        elif head == "unit":
            close_unit()
            name = line[len("unit"):].strip()
            if not name:
                raise ModelFormatError("unit needs a name", path, lineno)
            current = (name, [], [], lineno)
            section_of_current = section
        elif head == "target":
            if current is None:
                raise ModelFormatError("target outside of a unit", path, lineno)
            if len(tokens) != 5:
                raise ModelFormatError("target needs: vertex dx dy dz", path, lineno)
            try:
                vi = int(tokens[1])
            except ValueError:
                raise ModelFormatError(f"bad vertex index {tokens[1]!r}", path, lineno)
            if vi < 0 or vi >= len(vertices):
                raise ModelFormatError(
                    f"target vertex index out of range ({vi} with {len(vertices)} vertices)",
                    path, lineno)
            current[1].append(vi)
            current[2].append(_floats(tokens[2:], path, lineno, 3))
        else:
            raise ModelFormatError(f"unexpected line in {section}: {line!r}", path, lineno)
    close_unit()

    got = {"VERTICES": len(vertices), "TRIANGLES": len(triangles),
           "SHAPE_UNITS": len(units["SHAPE_UNITS"]), "ACTION_UNITS": len(units["ACTION_UNITS"])}
    for sec, (n, ln) in declared.items():
        if got[sec] != n:
            raise ModelFormatError(f"{sec} header declares {n} entries, found {got[sec]}", path, ln)
    return CandideModel(
        vertices=np.array(vertices, dtype=float).reshape(-1, 3),
        triangles=np.array(triangles, dtype=np.int64).reshape(-1, 3),
        shape_units=units["SHAPE_UNITS"],
        action_units=units["ACTION_UNITS"],
    )


def load_model(path=None):
    """Load a model file, or the bundled default when ``path`` is None."""
    if path is None:
        text = resources.files("candidefit.data").joinpath("candide_default.txt").read_text()
        return parse_model(text, "candide_default.txt")
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), str(path))


def dump_model(model):
    """Serialize ``model`` to text that :func:`parse_model` reads back identically."""
    lines = [f"VERTICES {model.n_vertices}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in model.vertices]
    lines.append(f"TRIANGLES {len(model.triangles)}")
    lines += [" ".join(str(int(i)) for i in t) for t in model.triangles]
    for header, group in (("SHAPE_UNITS", model.shape_units), ("ACTION_UNITS", model.action_units)):
        lines.append(f"{header} {len(group)}")
        for u in group:
            lines.append(f"unit {u.name}")
            for i, d in zip(u.indices, u.displacements):
                lines.append(f"target {int(i)} " + " ".join(repr(float(c)) for c in d))
    return "\n".join(lines) + "\n"


def save_model(model, path):
    Path(path).write_text(dump_model(model), encoding="utf-8")


def parse_correspondence(text, model, path="<string>", expected=N_SALIENT):
    """Parse ``<fp68_index> <vertex_index>`` pairs and optional ``interp`` lines.

    ``interp <fp68> <v1> <w1> [<v2> <w2> ...]`` places a non-salient landmark at a
    fixed weighted blend of model vertices.
    """
    pairs, interp = [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "interp":
            if len(tokens) < 4 or len(tokens) % 2:
                raise ModelFormatError("interp needs: fp68 (vertex weight)+", path, lineno)
            try:
                lm = int(tokens[1])
                vs = [int(t) for t in tokens[2::2]]
                ws = [float(t) for t in tokens[3::2]]
            except ValueError:
                raise ModelFormatError(f"cannot parse interp line {line!r}", path, lineno)
            if not 0 <= lm < N_LANDMARKS:
                raise ModelFormatError(f"landmark index out of range: {lm}", path, lineno)
            if any(v < 0 or v >= model.n_vertices for v in vs):
                raise ModelFormatError("interp vertex index not in model", path, lineno)
            if lm in interp:
                raise ModelFormatError(f"duplicate interp for landmark {lm}", path, lineno)
            interp[lm] = (np.array(vs, dtype=np.int64), np.array(ws, dtype=float))
            continue
        if len(tokens) != 2:
            raise ModelFormatError("expected '<fp68_index> <vertex_index>'", path, lineno)
        try:
            lm, vx = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ModelFormatError(f"indices must be integers: {line!r}", path, lineno)
        if not 0 <= lm < N_LANDMARKS:
            raise ModelFormatError(f"landmark index out of range: {lm}", path, lineno)
        if not 0 <= vx < model.n_vertices:
            raise ModelFormatError(f"vertex index not in model: {vx}", path, lineno)
        pairs.append((lm, vx, lineno))

    seen_lm, seen_vx = {}, {}
    for lm, vx, ln in pairs:
        if lm in seen_lm:
            raise ModelFormatError(f"duplicate landmark index {lm}", path, ln)
        if vx in seen_vx:
            raise ModelFormatError(f"duplicate vertex index {vx}", path, ln)
        seen_lm[lm] = seen_vx[vx] = ln
    if expected is not None and len(pairs) != expected:
        raise ModelFormatError(f"expected {expected} pairs, found {len(pairs)}", path)
    clash = set(interp) & set(seen_lm)
    if clash:
        raise ModelFormatError(f"landmarks both paired and interpolated: {sorted(clash)}", path)
    return Correspondence(tuple((lm, vx) for lm, vx, _ in pairs), interp)


def load_correspondence(path, model):
    """Load a correspondence file, or the bundled default when ``path`` is None."""
    if path is None:
        text = resources.files("candidefit.data").joinpath("correspondence_default.txt").read_text()
        return parse_correspondence(text, model, "correspondence_default.txt")
    path = Path(path)
    return parse_correspondence(path.read_text(encoding="utf-8"), model, str(path))


def load_defaults():
    """The bundled model and correspondence."""
    model = load_model()
    return model, load_correspondence(None, model)
