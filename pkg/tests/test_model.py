import numpy as np
import pytest

from candidefit.model import (N_SALIENT, CandideModel, DeformationUnit, ModelFormatError,
                              dump_model, load_correspondence, parse_correspondence, parse_model,
                              save_model, load_model)

TINY = """\
VERTICES 3
0 0 0
1 0 0
0 1 0
TRIANGLES 1
0 1 2
SHAPE_UNITS 1
unit width
target 1 0.1 0 0
ACTION_UNITS 1
unit AU26/27 jaw drop
target 2 0 -0.2 0
"""


def test_tiny_model_parses():
    m = parse_model(TINY)
    assert m.n_vertices == 3
    assert m.n_shape == 1 and m.n_action == 1
    assert m.shape_basis.shape == (3, 3, 1)
    assert m.action_basis[2, 1, 0] == pytest.approx(-0.2)
    assert m.action_units[0].facs_ids == (26, 27)


def test_bad_triangle_index_reports_line():
    with pytest.raises(ModelFormatError) as exc:
        parse_model(TINY.replace("0 1 2", "0 1 99"))
    assert "triangle index out of range" in str(exc.value)
    assert exc.value.lineno == 6


def test_declared_count_mismatch():
    with pytest.raises(ModelFormatError, match="declares 4"):
        parse_model(TINY.replace("VERTICES 3", "VERTICES 4"))


def test_vertices_outside_unit_cube_rejected():
    with pytest.raises(ValueError):
        parse_model(TINY.replace("1 0 0", "1.5 0 0"))


@pytest.mark.parametrize("line, msg", [
    ("target 7 0 0 0", "out of range"),
    ("target 1 0 0", "vertex dx dy dz"),
    ("bogus", "unexpected line"),
])
def test_unit_line_errors(line, msg):
    text = TINY.replace("target 1 0.1 0 0", line)
    with pytest.raises(ModelFormatError, match=msg):
        parse_model(text)


def test_duplicate_target_rejected():
    with pytest.raises(ModelFormatError, match="repeats"):
        parse_model(TINY.replace("target 1 0.1 0 0", "target 1 0.1 0 0\ntarget 1 0 0 0"))


def test_default_model_round_trips(model, tmp_path):
    p = tmp_path / "m.txt"
    save_model(model, p)
    back = load_model(p)
    assert back == model
    assert dump_model(back) == dump_model(model)


def test_default_model_shape(model):
    assert model.n_shape == 15
    assert model.n_action == 8
    assert np.all(np.abs(model.vertices) <= 1.0)
    assert len(set(model.shape_names)) == 15


def test_bases_are_read_only(model):
    with pytest.raises(ValueError):
        model.shape_basis[0, 0, 0] = 1.0


def test_default_correspondence(model, corr):
    assert corr.n_active == N_SALIENT
    assert len(set(corr.active_3d.tolist())) == N_SALIENT
    covered = set(corr.active_2d.tolist()) | set(corr.interpolation)
    assert covered == set(range(68))


def test_correspondence_count_error(model):
    text = "\n".join(f"{i} {i}" for i in range(36))
    with pytest.raises(ModelFormatError, match="expected 37 pairs, found 36"):
        parse_correspondence(text, model)


def test_correspondence_range_and_duplicates(model):
    with pytest.raises(ModelFormatError, match="landmark index out of range"):
        parse_correspondence("68 0", model, expected=None)
    with pytest.raises(ModelFormatError, match="vertex index not in model"):
        parse_correspondence("0 9999", model, expected=None)
    with pytest.raises(ModelFormatError, match="duplicate landmark"):
        parse_correspondence("0 0\n0 1", model, expected=None)


def test_correspondence_missing_file(model, tmp_path):
    with pytest.raises(FileNotFoundError):
        load_correspondence(tmp_path / "nope.txt", model)


def test_unit_equality_and_dense():
    u = DeformationUnit("x", [1], [[0.0, 1.0, 0.0]])
    v = DeformationUnit("x", [1], [[0.0, 1.0, 0.0]])
    assert u == v
    assert u.dense(3)[1, 1] == 1.0 and u.dense(3).sum() == 1.0


def test_core_points_exclude_moved_vertices(model, corr):
    core = set(corr.core_points(model).tolist())
    for u in model.shape_units + model.action_units:
        assert core.isdisjoint(u.indices.tolist())
    assert isinstance(model, CandideModel)
