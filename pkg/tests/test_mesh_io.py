import gzip

import numpy as np
import pytest

from simready.mesh_io import (
    DegenerateFaceError,
    DegenerateGeometryError,
    IndexOutOfRange,
    MeshParseError,
    TriMesh,
    box_mesh,
    fit_to_unit_box,
    format_obj,
    load_mesh,
    merge_meshes,
    normalize,
    parse_obj,
    save_mesh,
)

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
v 0 0 1
v 1 0 1
v 0 1 1
v 1 1 1
f 1 5 7
f 1 7 3
f 2 4 8
f 2 8 6
f 1 2 6
f 1 6 5
f 3 7 8
f 3 8 4
f 1 3 4
f 1 4 2
f 5 6 8
f 5 8 7
"""


def test_load_unit_cube(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    m = load_mesh(p)
    assert m.n_vertices == 8 and m.n_faces == 12
    assert m.part_labels is None


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        parse_obj(CUBE_OBJ + "f 1 2 9\n")


def test_empty_file_has_no_geometry(tmp_path):
    p = tmp_path / "empty.obj"
    p.write_text("")
    with pytest.raises(MeshParseError, match="no geometry"):
        load_mesh(p)


def test_parse_error_reports_line():
    with pytest.raises(MeshParseError) as exc:
        parse_obj("v 0 0 0\nv 1 x 0\n")
    assert exc.value.line == 2


def test_degenerate_face_lists_indices():
    with pytest.raises(DegenerateFaceError) as exc:
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\nf 2 3 3\n")
    assert list(exc.value.faces) == [1, 2]


def test_quads_fan_triangulated_and_extras_ignored():
    m = parse_obj("v 0 0 0\nvt 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1 4/1/1\n")
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_negative_indices():
    m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    assert m.faces.tolist() == [[0, 1, 2]]


def test_groups_give_part_labels():
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\ng part_3\nf 1 2 3\ng part_7\nf 2 4 3\n"
    m = parse_obj(text, groups=True)
    assert m.part_labels.tolist() == [3, 7]
    assert parse_obj(text).part_labels is None
    with pytest.raises(MeshParseError):
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", groups=True)
    with pytest.raises(MeshParseError):
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\ng lid\nf 1 2 3\n", groups=True)


def test_cube_round_trip_faces_bitwise(tmp_path):
    m = parse_obj(CUBE_OBJ)
    p = tmp_path / "c.obj"
    save_mesh(m, p)
    back = load_mesh(p)
    assert np.array_equal(back.faces, m.faces)
    assert np.array_equal(back.vertices, m.vertices)


def test_random_mesh_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    v = rng.uniform(-5, 5, (10_000, 3))
    f = np.stack([np.arange(9998), np.arange(1, 9999), np.arange(2, 10_000)], 1)
    m = TriMesh(v, f)
    p = tmp_path / "r.obj.gz"
    save_mesh(m, p)
    back = load_mesh(p)
    assert np.array_equal(back.faces, m.faces)
    assert np.abs(back.vertices - v).max() < 1e-6


def test_labeled_round_trip(tmp_path):
    m = merge_meshes([box_mesh([0, 0, 0], [1, 1, 1]), box_mesh([2, 0, 0], [3, 1, 1])], labels=[4, 1])
    p = tmp_path / "l.obj"
    save_mesh(m, p)
    assert np.array_equal(load_mesh(p, groups=True).part_labels, m.part_labels)


def test_gzip_output_is_byte_stable(tmp_path):
    m = box_mesh([0, 0, 0], [1, 2, 3])
    save_mesh(m, tmp_path / "a.obj.gz")
    save_mesh(m, tmp_path / "b.obj.gz")
    assert (tmp_path / "a.obj.gz").read_bytes() == (tmp_path / "b.obj.gz").read_bytes()
    assert gzip.decompress((tmp_path / "a.obj.gz").read_bytes()).decode() == format_obj(m)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_mesh(box_mesh([0, 0, 0], [1, 1, 1]), tmp_path / "missing" / "x.obj")


def test_normalize_symmetric_cube():
    m, bb = normalize(box_mesh([-2, -2, -2], [2, 2, 2]))
    assert np.allclose(m.bounds()[0], 0) and np.allclose(m.bounds()[1], 1)
    assert bb.extents == (4.0, 4.0, 4.0)
    assert bb.origin == (-2.0, -2.0, -2.0)


def test_normalize_identity_on_unit_cube():
    src = box_mesh([0, 0, 0], [1, 1, 1])
    m, bb = normalize(src)
    assert np.array_equal(m.vertices, src.vertices)
    assert bb.extents == (1.0, 1.0, 1.0)


def test_normalize_divides_by_longest_edge():
    m, _ = normalize(box_mesh([0, 0, 0], [2, 1, 1]))
    lo, hi = m.bounds()
    assert np.allclose(hi - lo, [1, 0.5, 0.5])


def test_normalize_idempotent_and_similarity():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(200, 3)) * [3, 1, 0.2] + 7
    src = TriMesh(v, np.stack([np.arange(198), np.arange(1, 199), np.arange(2, 200)], 1))
    once, _ = normalize(src)
    twice, _ = normalize(once)
    assert np.abs(once.vertices - twice.vertices).max() < 1e-9
    lo, hi = once.bounds()
    assert lo.min() >= 0 and hi.max() <= 1 and abs((hi - lo).max() - 1) < 1e-12
    # similarity: ratios of pairwise distances are preserved
    d_src = np.linalg.norm(v[1:] - v[:-1], axis=1)
    d_out = np.linalg.norm(once.vertices[1:] - once.vertices[:-1], axis=1)
    ratio = d_out / d_src
    assert np.ptp(ratio) < 1e-9


def test_normalize_rejects_collapsed_mesh():
    v = np.ones((3, 3))
    with pytest.raises(DegenerateGeometryError):
        normalize(TriMesh(v, [[0, 1, 2]]))


def test_fit_to_unit_box_per_axis():
    m, bb = fit_to_unit_box(box_mesh([1, 1, 1], [3, 2, 1.5]))
    lo, hi = m.bounds()
    assert np.allclose(lo, 0) and np.allclose(hi, 1)
    assert bb.extents == (2.0, 1.0, 0.5)


def test_surface_samples_lie_on_mesh():
    m = box_mesh([0, 0, 0], [1, 1, 1])
    p = m.sample_surface(500, seed=1)
    on_face = np.isclose(p, 0, atol=1e-12) | np.isclose(p, 1, atol=1e-12)
    assert on_face.any(axis=1).all()
    assert np.array_equal(p, m.sample_surface(500, seed=1))
