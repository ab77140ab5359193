import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfcol.predicates import orient_bary
from selfcol.triangulate import TriangulationError, orientation_table, triangulate_face

CORNERS = np.eye(3)
XYZ = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def bary_points(rng, k, on_edges=0):
    w = rng.dirichlet(np.ones(3), size=k)
    pts = [w]
    if on_edges:
        e = rng.uniform(0.05, 0.95, on_edges)
        side = rng.integers(0, 3, on_edges)
        edge = np.zeros((on_edges, 3))
        edge[np.arange(on_edges), side] = 0.0
        edge[np.arange(on_edges), (side + 1) % 3] = e
        edge[np.arange(on_edges), (side + 2) % 3] = 1 - e
        pts.append(edge)
    return np.vstack([CORNERS, *pts])


def check(P, tris, chains):
    dets = np.linalg.det(P[tris])
    assert (dets > 0).all()
    assert dets.sum() == pytest.approx(1.0, rel=1e-12)
    assert set(np.unique(tris).tolist()) == set(range(len(P)))
    edges = {tuple(sorted(e)) for t in tris.tolist() for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
    for ch in chains:
        for a, b in zip(ch[:-1], ch[1:]):
            assert tuple(sorted((a, b))) in edges


@pytest.mark.parametrize("seed", range(3))
def test_table_matches_exact_predicate(seed):
    P = bary_points(np.random.default_rng(seed), 4, on_edges=3)
    P = np.vstack([P, P[4]])
    S = orientation_table(P)
    for i, j, k in itertools.product(range(len(P)), repeat=3):
        assert S[i, j, k] == orient_bary(P[i].tolist(), P[j].tolist(), P[k].tolist())


def test_bare_triangle():
    P, tris, chains = triangulate_face(CORNERS, [], XYZ)
    assert tris.tolist() == [[0, 1, 2]] and chains == []


def test_single_segment_through_face():
    P = np.vstack([CORNERS, [0.0, 0.5, 0.5], [0.6, 0.2, 0.2]])
    out, tris, chains = triangulate_face(P, [(3, 4)], P @ XYZ)
    assert len(out) == 5 and chains == [[3, 4]]
    check(out, tris, chains)


def test_crossing_constraints_get_steiner_point():
    P = np.vstack([CORNERS, [0.6, 0.2, 0.2], [0.1, 0.45, 0.45], [0.3, 0.6, 0.1], [0.3, 0.1, 0.6]])
    out, tris, chains = triangulate_face(P, [(3, 4), (5, 6)], P @ XYZ)
    assert len(out) == 8
    assert chains[0][1] == chains[1][1] == 7
    check(out, tris, chains)


def test_constraint_through_existing_point_is_split():
    P = np.vstack([CORNERS, [0.2, 0.4, 0.4], [0.6, 0.2, 0.2], [0.4, 0.3, 0.3]])
    out, tris, chains = triangulate_face(P, [(3, 4)], P @ XYZ)
    assert chains == [[3, 5, 4]]
    check(out, tris, chains)


def test_steiner_budget():
    rng = np.random.default_rng(5)
    P = bary_points(rng, 12)
    cons = [(3 + 2 * k, 4 + 2 * k) for k in range(6)]
    with pytest.raises(TriangulationError):
        triangulate_face(P, cons, P @ XYZ, max_steiner=0) if _crossings(P, cons) else _raise()


def _raise():
    raise TriangulationError("no crossing in sample")


def _crossings(P, cons):
    S = orientation_table(P)
    for (a, b), (c, d) in itertools.combinations(cons, 2):
        if len({a, b, c, d}) == 4 and S[a, b, c] * S[a, b, d] < 0 and S[c, d, a] * S[c, d, b] < 0:
            return True
    return False


@given(st.integers(0, 2**32 - 1), st.integers(0, 8), st.integers(0, 4), st.integers(0, 6))
def test_random_faces_partition_and_keep_constraints(seed, k, on_edges, n_cons):
    rng = np.random.default_rng(seed)
    P = bary_points(rng, k, on_edges)
    n = len(P)
    cons = []
    for _ in range(n_cons):
        a, b = rng.choice(n, 2, replace=False)
        cons.append((int(a), int(b)))
    out, tris, chains = triangulate_face(P, cons, P @ XYZ)
    check(out, tris, chains)
    for c, ch in zip(cons, chains):
        assert (ch[0], ch[-1]) == c


def star(k, jitter, seed=11):
    rng = np.random.default_rng(seed)
    ends = []
    for a in rng.uniform(0, np.pi, k):
        c = np.array([1 / 3, 1 / 3]) + rng.normal(0, jitter, 2)
        d = 0.15 * np.array([np.cos(a), np.sin(a)])
        for s in (1, -1):
            u, v = c + s * d
            ends.append([1 - u - v, u, v])
    return np.vstack([CORNERS, ends]), [(3 + 2 * i, 4 + 2 * i) for i in range(k)]


def test_many_mutually_crossing_constraints():
    P, cons = star(12, 0.01)
    out, tris, chains = triangulate_face(P, cons, P @ XYZ)
    check(out, tris, chains)
    assert len(out) > len(P)


def test_concurrent_constraints_share_one_steiner_point():
    # twenty segments through one point: rounded crossings snap together
    P, cons = star(20, 0.0)
    out, tris, chains = triangulate_face(P, cons, P @ XYZ)
    check(out, tris, chains)
    assert len(out) == len(P) + 1
    assert all(len(ch) == 3 and ch[1] == len(P) for ch in chains)
