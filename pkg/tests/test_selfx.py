import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfcol import fixtures
from selfcol.mesh import TriMesh
from selfcol.selfx import (
    DEDUP_TOL,
    detect_self_intersections,
    intersection_point,
    remesh_on_intersections,
)
from oracles import edge_face_crossings


def face_areas(v, f):
    return 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)


def check_area_partition(mesh, rr, rel=1e-9):
    parent = face_areas(mesh.vertices, mesh.faces)
    child = np.bincount(rr.face_parent, weights=face_areas(rr.mesh.vertices, rr.mesh.faces), minlength=mesh.n_faces)
    np.testing.assert_allclose(child, parent, rtol=rel, atol=0)


def dist_to_segments(p, V, E):
    a, b = V[E[:, 0]], V[E[:, 1]]
    ab = b - a
    t = np.clip(((p - a) * ab).sum(1) / (ab * ab).sum(1), 0, 1)
    return np.linalg.norm(a + t[:, None] * ab - p, axis=1).min()


def test_far_apart_components_have_no_records():
    m = fixtures.crossing_triangles()
    v = m.vertices.copy()
    v[3:] += 10.0
    assert detect_self_intersections(m.with_vertices(v)) == []


def test_crossing_triangles_two_partnered_records():
    recs = detect_self_intersections(fixtures.crossing_triangles())
    assert len(recs) == 2
    assert recs[0].partners == (1,) and recs[1].partners == (0,)
    assert not any(r.is_loop_vertex for r in recs)


def test_shared_vertex_gives_single_loop_record():
    (r,) = detect_self_intersections(fixtures.loop_vertex_pair())
    assert r.is_loop_vertex and r.loop_vertex == 0
    assert r.edge == (3, 4) and r.face == 0 and r.partners == (-1,)


def test_adjacent_faces_are_skipped():
    m = fixtures.grid_sheet(4, 4)
    v = m.vertices.copy()
    v[:, 2] = np.random.default_rng(2).normal(0, 0.05, len(v))
    assert detect_self_intersections(m.with_vertices(v)) == []


def test_records_are_sorted_unique_and_valid(folded):
    recs = detect_self_intersections(folded)
    keys = [(r.edge, r.face) for r in recs]
    assert keys == sorted(set(keys))
    for r in recs:
        b = np.array(r.bary)
        assert (b >= -1e-9).all() and (b <= 1 + 1e-9).all() and abs(b.sum() - 1) <= 1e-9
        p_edge = (1 - r.t) * folded.vertices[r.edge[0]] + r.t * folded.vertices[r.edge[1]]
        np.testing.assert_allclose(intersection_point(r, folded), p_edge, atol=1e-12)


def test_coplanar_overlap_resolved_with_note():
    v = np.array([[0, 0, 0], [2, 0, 0], [0, 2, 0], [0.5, 0.5, 0], [2.5, 0.5, 0], [0.5, 2.5, 0.0]])
    m = TriMesh(v, [[0, 1, 2], [3, 4, 5]])
    diags = []
    recs = detect_self_intersections(m, diagnostics=diags)
    assert "coplanar_pair" in [d.kind for d in diags]
    # the perturbed configuration is a regular crossing
    assert len(recs) == 2 and recs[0].partners == (1,)


@pytest.mark.parametrize("make", [lambda: fixtures.folded_sheet(12), lambda: fixtures.pinched_torus(24, 8)])
@settings(max_examples=4)
@given(seed=st.integers(0, 2**32 - 1))
def test_detection_matches_exact_oracle(make, seed):
    m = make()
    rng = np.random.default_rng(seed)
    m = m.with_vertices(m.vertices + rng.normal(0, 1e-3, m.vertices.shape))
    got = {(r.edge, r.face) for r in detect_self_intersections(m)}
    assert got == edge_face_crossings(m.vertices, m.faces)


def test_empty_records_identity_remesh():
    m = fixtures.unit_cube()
    rr = remesh_on_intersections(m, [])
    np.testing.assert_array_equal(rr.mesh.faces, m.faces)
    np.testing.assert_array_equal(rr.mesh.vertices, m.vertices)
    np.testing.assert_array_equal(rr.provenance.matrix.toarray(), np.eye(8))
    assert rr.segment_edges == []


def test_crossing_pair_remesh():
    m = fixtures.crossing_triangles()
    recs = detect_self_intersections(m)
    rr = remesh_on_intersections(m, recs)
    assert rr.mesh.n_faces > 2 and set(rr.face_parent.tolist()) == {0, 1}
    check_area_partition(m, rr)
    # segment endpoints are corners of at least two children of their face
    for s in rr.segment_edges:
        kids = rr.mesh.faces[rr.face_parent == s.face]
        for u in (s.u, s.v):
            assert np.any(kids == u, axis=1).sum() >= 2
    # each sheet carries its own copy of every intersection point
    for r in recs:
        p = intersection_point(r, m)
        for f in (0, 1):
            kids = np.unique(rr.mesh.faces[rr.face_parent == f])
            assert np.linalg.norm(rr.mesh.vertices[kids] - p, axis=1).min() <= DEDUP_TOL


def test_torus_segments_form_closed_cycles(torus):
    rr = remesh_on_intersections(torus, detect_self_intersections(torus))
    keys = rr.segment_edge_keys()
    n = rr.mesh.n_vertices
    u, v = keys // n, keys % n
    degree = np.bincount(np.concatenate([u, v]), minlength=n)
    assert set(degree[degree > 0].tolist()) == {2}


@pytest.mark.parametrize("name", ["crossing", "loop", "folded", "torus"])
def test_remesh_conservation_and_redetection(name, folded, torus):
    m = {"crossing": fixtures.crossing_triangles(), "loop": fixtures.loop_vertex_pair(),
         "folded": folded, "torus": torus}[name]
    rr = remesh_on_intersections(m, detect_self_intersections(m))
    check_area_partition(m, rr)
    # provenance rebuilds every vertex from the originals
    np.testing.assert_allclose(rr.provenance.apply(m.vertices), rr.mesh.vertices, rtol=0, atol=1e-9)
    W = rr.provenance.matrix
    assert W.min() >= 0
    np.testing.assert_allclose(np.asarray(W.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    total = face_areas(m.vertices, m.faces).sum()
    assert face_areas(rr.mesh.vertices, rr.mesh.faces).sum() == pytest.approx(total, rel=1e-9)
    again = detect_self_intersections(rr.mesh)
    E = np.array([(s.u, s.v) for s in rr.segment_edges])
    for r in again:
        assert dist_to_segments(intersection_point(r, rr.mesh), rr.mesh.vertices, E) <= 1e-9


def test_detection_is_deterministic(torus):
    a = detect_self_intersections(torus)
    b = detect_self_intersections(torus.with_vertices(torus.vertices.copy()))
    assert [r.to_json() for r in a] == [r.to_json() for r in b]
