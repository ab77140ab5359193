import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfcol import fixtures
from selfcol.mesh import TriMesh
from selfcol.proximity import build_self_collision_edges
from oracles import close_pairs_brute

R = 0.02  # 2 cm


def crumpled_sheet(seed, nx=39, ny=49, spacing=0.01):
    """Grid sheet with 2000 vertices, spacing near r/2, randomly crumpled."""
    m = fixtures.grid_sheet(nx, ny, size=(nx * spacing, ny * spacing))
    rng = np.random.default_rng(seed)
    v = m.vertices + rng.normal(0, 0.4 * spacing, m.vertices.shape)
    # fold so the sheet comes back near itself
    v[:, 2] += 0.05 * np.sin(v[:, 0] * 40.0)
    v[:, 0] = np.abs(v[:, 0] - 0.2)
    return TriMesh(v, m.faces, validate=False)


def test_two_free_vertices_one_cm_apart():
    v = np.array([[0, 0, 0], [0.01, 0, 0], [5, 0, 0], [5, 1, 0], [5, 0, 1], [0, 0, 7], [1, 0, 7], [0, 1, 7]])
    m = TriMesh(v, [[2, 3, 4], [5, 6, 7]], validate=False)
    es = build_self_collision_edges(m, R)
    assert es.pairs.tolist() == [[0, 1]]


def test_edge_neighbours_are_excluded():
    v = np.array([[0, 0, 0], [0.01, 0, 0], [0, 0.5, 0.0]])
    m = TriMesh(v, [[0, 1, 2]])
    assert len(build_self_collision_edges(m, R)) == 0


def test_strict_radius_boundary():
    v = np.array([[0, 0, 0], [0.5, 0, 0], [2, 0, 0], [3, 0, 0], [2, 1, 0]])
    m = TriMesh(v, [[2, 3, 4]], validate=False)
    assert len(build_self_collision_edges(m, 0.5)) == 0
    assert len(build_self_collision_edges(m, np.nextafter(0.5, 1))) == 1


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        build_self_collision_edges(fixtures.unit_cube(), 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_crumpled_sheet_matches_brute_force(seed):
    m = crumpled_sheet(seed)
    assert m.n_vertices == 2000
    got = build_self_collision_edges(m, R)
    want = close_pairs_brute(m.vertices, R, m.edges)
    assert got.as_set() == want
    # exclusion is doing work here
    assert len(close_pairs_brute(m.vertices, R, [])) > len(want) > 0


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(0.005, 0.2), st.integers(2, 400))
def test_matches_brute_force_random(seed, r, n):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 3))
    faces = rng.integers(0, n, (n // 2 + 1, 3))
    faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])]
    m = TriMesh(x, faces, validate=False) if len(faces) else TriMesh(x, np.zeros((0, 3), int), validate=False)
    es = build_self_collision_edges(m, r)
    assert es.as_set() == close_pairs_brute(x, r, m.edges)


@given(st.integers(0, 2**32 - 1))
def test_pairs_sorted_and_within_radius(seed):
    m = crumpled_sheet(seed, nx=9, ny=9, spacing=0.01)
    es = build_self_collision_edges(m, R)
    p = es.pairs
    assert (p[:, 0] < p[:, 1]).all()
    assert p.tolist() == sorted(p.tolist())
    d = np.linalg.norm(m.vertices[p[:, 0]] - m.vertices[p[:, 1]], axis=1)
    assert (d < R).all()
    assert not es.as_set() & {tuple(e) for e in m.edges.tolist()}


def test_far_coordinates_and_huge_extent():
    x = np.array([[1e6, 0, 0], [1e6 + 1e-3, 0, 0], [-1e6, 0, 0], [-1e6, 1e-3, 0]])
    m = TriMesh(x, np.zeros((0, 3), int), validate=False)
    assert build_self_collision_edges(m, 0.01).pairs.tolist() == [[0, 1], [2, 3]]


def test_uses_given_positions(folded):
    x = folded.vertices.copy()
    x[5] = x[300]
    es = build_self_collision_edges(folded, R, x)
    assert (5, 300) in es.as_set()
    assert (5, 300) not in build_self_collision_edges(folded, R).as_set()
