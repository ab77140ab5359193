import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfcol import fixtures
from selfcol.mesh import MeshError, TriMesh, find_boundary_loops, load_obj, save_obj, surface_area
from oracles import boundary_edges

CUBE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def write(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_single_triangle_obj(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert (m.n_vertices, m.n_faces) == (3, 1)


def test_cube_obj_is_closed(tmp_path):
    m = load_obj(write(tmp_path, CUBE_OBJ))
    assert (m.n_vertices, m.n_faces) == (8, 12)
    assert find_boundary_loops(m) == []


def test_quads_split_like_hand_triangulation(tmp_path):
    quads = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 2 0 0\nv 2 1 0\nf 1 2 3 4\nf 2 5 6 3\n"
    tris = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 2 0 0\nv 2 1 0\nf 1 2 3\nf 1 3 4\nf 2 5 6\nf 2 6 3\n"
    a = load_obj(write(tmp_path, quads, "q.obj"))
    b = load_obj(write(tmp_path, tris, "t.obj"))
    assert a.n_faces == 4
    np.testing.assert_array_equal(a.faces, b.faces)


def test_obj_slashes_and_negative_indices(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3/1/1 -2/2/1 -1/3/1\n"))
    np.testing.assert_array_equal(m.faces, [[0, 1, 2]])


@pytest.mark.parametrize("text", ["v 0 0\nf 1 2 3\n", "v 0 0 0\nv 1 0 0\nf 1 2\n", "", "v a b c\n"])
def test_bad_obj_raises(tmp_path, text):
    with pytest.raises(MeshError):
        load_obj(write(tmp_path, text))


def test_non_manifold_edge_lists_issue(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\nf 1 2 5\n"
    with pytest.raises(MeshError) as err:
        load_obj(write(tmp_path, text))
    assert err.value.issues and err.value.issues[0].kind == "non_manifold_edge"


def test_degenerate_and_duplicate_faces_rejected():
    with pytest.raises(MeshError):
        TriMesh(np.eye(3), [[0, 0, 1]])
    with pytest.raises(MeshError):
        TriMesh(np.eye(3), [[0, 1, 2], [1, 2, 0]])
    with pytest.raises(MeshError):
        TriMesh(np.eye(3), [[0, 1, 3]])


def test_save_load_roundtrip(tmp_path):
    m = fixtures.folded_sheet(6)
    save_obj(tmp_path / "r.obj", m)
    back = load_obj(tmp_path / "r.obj")
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=1e-8, atol=1e-12)


def test_single_triangle_one_loop():
    loops = find_boundary_loops(TriMesh(np.eye(3), [[0, 1, 2]]))
    assert len(loops) == 1 and len(loops[0]) == 3


def test_tetrahedron_has_no_loops():
    assert find_boundary_loops(fixtures.regular_tetrahedron()) == []


def test_open_tube_two_loops_match_edge_census():
    m = fixtures.open_tube(8, 2)
    loops = find_boundary_loops(m)
    assert sorted(len(l) for l in loops) == [8, 8]
    found = {tuple(sorted(e)) for l in loops for e in l.edges()}
    assert found == boundary_edges(m.faces)


def test_loop_keeps_incident_face_on_the_left():
    m = fixtures.grid_sheet(3, 2)
    (loop,) = find_boundary_loops(m)
    directed = {tuple(e) for e in m.half_edges.tolist()}
    assert all(e in directed for e in loop.edges())


def test_surface_area_examples():
    assert surface_area(TriMesh(np.eye(3), [[0, 1, 2]])) == pytest.approx(np.sqrt(3) / 2)
    right = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert surface_area(right) == 0.5
    assert surface_area(fixtures.unit_cube()) == pytest.approx(6.0, abs=1e-14)


@given(st.floats(0.1, 10.0))
def test_area_scales_quadratically(s):
    m = fixtures.folded_sheet(4)
    scaled = m.with_vertices(m.vertices * s)
    assert surface_area(scaled) == pytest.approx(surface_area(m) * s * s, rel=1e-12)


def test_edges_and_adjacency_consistent():
    m = fixtures.unit_cube()
    assert len(m.edges) == 18
    adj = m.face_adjacency
    assert (adj >= 0).all()
    for f in range(m.n_faces):
        for k in range(3):
            g = adj[f, k]
            assert f in adj[g]
