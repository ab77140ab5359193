"""Triangle-triangle self-intersection detection and intersection-aware remeshing.

Detection runs a BVH broad phase and a float-filtered narrow phase; pairs the
filter cannot settle, and every pair that does intersect, are redone with the
exact perturbed predicate so the combinatorics never depend on rounding.

Each intersecting pair contributes one segment. A record is the point where
an edge pierces a face; in the remeshed surface it exists twice, once on the
edge (shared by the faces around that edge) and once inside the pierced face.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import kernels
from .bvh import build_bvh
from .diagnostics import Diagnostic, note
from .mesh import MeshError, TriMesh
from .predicates import Orient3D, directions_for, flush_tiny
from .triangulate import TriangulationError, triangulate_face

DEDUP_TOL = 1e-10


@dataclass(frozen=True)
class IntersectionRecord:
    """Edge ``edge`` (sorted vertex pair) piercing face ``face``.

    ``t`` locates the point on the edge from ``edge[0]``; ``bary`` locates it
    in ``face``. ``pair_faces[k]`` is a face pair whose test produced this
    record and ``partners[k]`` the other record of that test (-1 when the
    test produced only this one, which happens exactly when the pair shares
    vertex ``loop_vertex``).
    """

    edge: tuple[int, int]
    face: int
    bary: tuple[float, float, float]
    t: float
    pair_faces: tuple[tuple[int, int], ...]
    partners: tuple[int, ...]
    is_loop_vertex: bool = False
    loop_vertex: int = -1

    @property
    def partner(self) -> int:
        """First non-loop partner, or -1."""
        return next((p for p in self.partners if p >= 0), -1)

    def to_json(self) -> dict:
        return {
            "edge": list(self.edge),
            "face": self.face,
            "bary": [float(b) for b in self.bary],
            "partners": list(self.partners),
            "is_loop_vertex": self.is_loop_vertex,
            "loop_vertex": self.loop_vertex,
        }


@dataclass(frozen=True)
class Segment:
    """Intersection of faces ``face_a`` and ``face_b``, from record ``rec_a`` to ``rec_b``.

    Loop segments end at the shared vertex ``loop_vertex`` and have ``rec_b == -1``.
    """

    face_a: int
    face_b: int
    rec_a: int
    rec_b: int
    loop_vertex: int = -1

    @property
    def is_loop(self) -> bool:
        return self.loop_vertex >= 0


# ---------------------------------------------------------------------------
# detection


def candidate_pairs(mesh: TriMesh, vertices: np.ndarray):
    """Box-overlapping face pairs not sharing an edge, rotated for the narrow phase.

    Returns ``(pairs, A, B, shared)``; for pairs sharing one vertex both rows
    of A and B start with that vertex.
    """
    F = mesh.faces
    pairs = build_bvh(mesh, vertices).self_pairs()
    fa, fb = F[pairs[:, 0]], F[pairs[:, 1]]
    eq = fa[:, :, None] == fb[:, None, :]
    nshared = eq.sum(axis=(1, 2))
    keep = nshared <= 1
    pairs, fa, fb, eq = pairs[keep], fa[keep], fb[keep], eq[keep]
    shared = nshared[keep] == 1
    ia = np.argmax(eq.any(axis=2), axis=1)
    ib = np.argmax(eq.any(axis=1), axis=1)
    ia[~shared] = 0
    ib[~shared] = 0
    rows = np.arange(len(pairs))[:, None]
    roll = np.arange(3)[None, :]
    A = fa[rows, (ia[:, None] + roll) % 3]
    B = fb[rows, (ib[:, None] + roll) % 3]
    return pairs, A, B, shared


def _crossing(o: Orient3D, p, q, tri, sp, sq):
    """1 if edge pq crosses triangle tri, 0 if not, None if degenerate."""
    if sp == 0 or sq == 0:
        return None
    if sp == sq:
        return 0
    u = o(p, q, tri[0], tri[1])
    v = o(p, q, tri[1], tri[2])
    w = o(p, q, tri[2], tri[0])
    if 0 in (u, v, w):
        return None
    return int(u == v == w)


def _exact_pair(o: Orient3D, A, B, shared):
    """List of crossings ``(p, q, tri)`` (edge pq of one face pierces tri), or None if degenerate."""
    out = []
    if shared:
        s1, s2 = o(*B, A[1]), o(*B, A[2])
        r1, r2 = o(*A, B[1]), o(*A, B[2])
        for p, q, tri, sp, sq in ((A[1], A[2], B, s1, s2), (B[1], B[2], A, r1, r2)):
            c = _crossing(o, p, q, tri, sp, sq)
            if c is None:
                return None
            if c:
                out.append((p, q, tri))
        return out
    sa = [o(*B, a) for a in A]
    if sa[0] != 0 and sa[0] == sa[1] == sa[2]:
        return []
    sb = [o(*A, b) for b in B]
    if sb[0] != 0 and sb[0] == sb[1] == sb[2]:
        return []
    for X, Y, s in ((A, B, sa), (B, A, sb)):
        for i in range(3):
            j = (i + 1) % 3
            c = _crossing(o, X[i], X[j], Y, s[i], s[j])
            if c is None:
                return None
            if c:
                out.append((X[i], X[j], Y))
    return out


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _locate(V, p, q, tri):
    """(t along p->q, barycentric weights in tri) of the crossing, in floating point."""
    P, Q = V[p].tolist(), V[q].tolist()
    y0, y1, y2 = V[tri[0]].tolist(), V[tri[1]].tolist(), V[tri[2]].tolist()
    n = _cross(_sub(y1, y0), _sub(y2, y0))
    dp, dq = _dot(_sub(P, y0), n), _dot(_sub(Q, y0), n)
    t = dp / (dp - dq) if dp != dq else 0.5
    t = min(max(t, 0.0), 1.0)
    d = _sub(Q, P)
    a, b, c = _sub(y0, P), _sub(y1, P), _sub(y2, P)
    w = np.array([_dot(d, _cross(b, c)), _dot(d, _cross(c, a)), _dot(d, _cross(a, b))])
    s = w.sum()
    if s != 0.0 and np.all(w * np.sign(s) >= -1e-12 * abs(s)):
        w = np.clip(w / s, 0.0, None)
    else:
        # near-coplanar: project the edge point into the triangle plane
        X = np.asarray(P) + t * np.asarray(d)
        w = _project_bary(X, V[tri[0]], V[tri[1]], V[tri[2]])
    return t, w / w.sum()


def _project_bary(X, a, b, c):
    e1, e2, r = b - a, c - a, X - a
    G = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    try:
        u, v = np.linalg.solve(G, [r @ e1, r @ e2])
    except np.linalg.LinAlgError:
        return np.full(3, 1.0 / 3.0)
    w = np.clip(np.array([1.0 - u - v, u, v]), 0.0, None)
    return w if w.sum() > 0 else np.full(3, 1.0 / 3.0)


FAILURE_KINDS = frozenset({"unresolved_degeneracy", "open_chain", "flood_leak", "unpaired_path", "open_region"})


def detect_self_intersections(mesh: TriMesh, vertices: np.ndarray | None = None,
                              diagnostics: list | None = None) -> list[IntersectionRecord]:
    """All (edge, face) crossings between faces that do not share an edge.

    Output is sorted by ``(edge, face)``. Degenerate pairs that survive the
    perturbation are skipped and reported in ``diagnostics``.
    """
    V = flush_tiny(mesh.vertices if vertices is None else vertices)
    if mesh.n_faces < 2:
        return []
    D = directions_for(len(V))
    pairs, A, B, shared = candidate_pairs(mesh, V)
    codes = kernels.classify_pairs(V, D, A, B, shared)
    o = Orient3D(V, D)
    raw: dict[tuple[int, int, int], dict] = {}
    tests: list[tuple[tuple[int, int], list[tuple[int, int, int]], int]] = []
    for k in np.flatnonzero(codes != kernels.NO_HIT):
        a, b, sh = A[k].tolist(), B[k].tolist(), bool(shared[k])
        fpair = (int(pairs[k, 0]), int(pairs[k, 1]))
        hits = _exact_pair(o, a, b, sh)
        expected = 1 if sh else 2
        if hits is None or (hits and len(hits) != expected):
            note(diagnostics, "unresolved_degeneracy", "triangle pair left degenerate by perturbation; skipped",
                 faces=list(fpair), crossings=None if hits is None else len(hits))
            continue
        if not hits:
            continue
        if not sh and all(o.value(*b, x) == 0.0 for x in a):
            note(diagnostics, "coplanar_pair", "coplanar overlapping pair resolved by perturbation", faces=list(fpair))
        keys = []
        for p, q, tri in hits:
            face = fpair[1] if tri is b else fpair[0]
            lo, hi = (p, q) if p < q else (q, p)
            key = (lo, hi, face)
            if key not in raw:
                t, w = _locate(V, lo, hi, _face_rows(mesh, face))
                raw[key] = {"t": t, "bary": w}
            keys.append(key)
        tests.append((fpair, keys, a[0] if sh else -1))

    order = sorted(raw)
    index = {key: i for i, key in enumerate(order)}
    pair_lists: list[list] = [[] for _ in order]
    partner_lists: list[list] = [[] for _ in order]
    loop_of = [-1] * len(order)
    for fpair, keys, lv in sorted(tests):
        ids = [index[k] for k in keys]
        for r in ids:
            other = [x for x in ids if x != r]
            pair_lists[r].append(fpair)
            partner_lists[r].append(other[0] if other else -1)
            if lv >= 0:
                loop_of[r] = lv
    records = []
    for i, key in enumerate(order):
        lo, hi, face = key
        records.append(IntersectionRecord(
            edge=(lo, hi), face=face,
            bary=tuple(float(x) for x in raw[key]["bary"]), t=float(raw[key]["t"]),
            pair_faces=tuple(pair_lists[i]), partners=tuple(partner_lists[i]),
            is_loop_vertex=loop_of[i] >= 0, loop_vertex=loop_of[i],
        ))
    if o.degenerate:
        note(diagnostics, "unresolved_degeneracy", "orientation degenerate under perturbation", count=o.degenerate)
    return records


def _face_rows(mesh: TriMesh, f: int) -> list[int]:
    return mesh.faces[f].tolist()


def build_segments(mesh: TriMesh, records: list[IntersectionRecord]) -> list[Segment]:
    """One segment per intersecting face pair, in sorted pair order."""
    by_pair: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        for fp in r.pair_faces:
            by_pair[fp].append(i)
    segs = []
    for (fa, fb), ids in sorted(by_pair.items()):
        ids = sorted(set(ids))
        if len(ids) == 2:
            segs.append(Segment(fa, fb, ids[0], ids[1]))
        elif len(ids) == 1:
            common = set(mesh.faces[fa].tolist()) & set(mesh.faces[fb].tolist())
            if len(common) != 1:
                raise MeshError("single-record pair whose faces do not share one vertex",
                                [Diagnostic("inconsistent_records", "bad loop pair", {"faces": [fa, fb]})])
            segs.append(Segment(fa, fb, ids[0], -1, common.pop()))
        else:
            raise MeshError("face pair with more than two records",
                            [Diagnostic("inconsistent_records", "pair has too many records", {"faces": [fa, fb]})])
    return segs


# ---------------------------------------------------------------------------
# remeshing


@dataclass(frozen=True, eq=False)
class ProvenanceMap:
    """Sparse ``(n_remeshed, n_original)`` matrix of convex weights."""

    matrix: sparse.csr_matrix

    @property
    def n_original(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def entries(self, i: int) -> list[tuple[int, float]]:
        s, e = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return [(int(c), float(w)) for c, w in zip(self.matrix.indices[s:e], self.matrix.data[s:e])]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ x)

    def pullback(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix.T @ g)

    @classmethod
    def identity(cls, n: int) -> "ProvenanceMap":
        return cls(sparse.identity(n, format="csr"))


@dataclass(frozen=True)
class SegmentEdge:
    """Remeshed edge ``(u, v)`` on segment ``segment`` inside original face ``face``."""

    u: int
    v: int
    segment: int
    face: int
    records: tuple[int, int]


@dataclass(frozen=True, eq=False)
class RemeshResult:
    mesh: TriMesh
    provenance: ProvenanceMap
    face_parent: np.ndarray
    segment_edges: list[SegmentEdge]
    records: list[IntersectionRecord]
    segments: list[Segment]
    # (segment, original face) -> remeshed vertex chain from the rec_a end to the other end
    chains: dict[tuple[int, int], tuple[int, ...]]
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def segment_edge_keys(self) -> np.ndarray:
        n = self.mesh.n_vertices
        if not self.segment_edges:
            return np.zeros(0, dtype=np.int64)
        e = np.array([(s.u, s.v) for s in self.segment_edges])
        return np.unique(np.minimum(e[:, 0], e[:, 1]) * n + np.maximum(e[:, 0], e[:, 1]))


def _check_records(mesh: TriMesh, records):
    keys = set(mesh.edge_key_set.tolist())
    n = mesh.n_vertices
    for r in records:
        lo, hi = r.edge
        if not (0 <= r.face < mesh.n_faces) or lo * n + hi not in keys or lo >= hi:
            raise MeshError("record does not match mesh",
                            [Diagnostic("inconsistent_records", "edge or face not in mesh", r.to_json())])
        if lo in mesh.faces[r.face] or hi in mesh.faces[r.face]:
            raise MeshError("record edge touches its own face",
                            [Diagnostic("inconsistent_records", "edge shares a vertex with face", r.to_json())])


def remesh_on_intersections(mesh: TriMesh, records: list[IntersectionRecord],
                            vertices: np.ndarray | None = None,
                            diagnostics: list | None = None) -> RemeshResult:
    """Split faces so every segment runs along edges of the output mesh.

    Output vertices are the input vertices followed by new ones; all
    positions are the provenance weights applied to the input positions.
    """
    diags = [] if diagnostics is None else diagnostics
    V = np.asarray(mesh.vertices if vertices is None else vertices, dtype=np.float64)
    n0 = mesh.n_vertices
    F = mesh.faces
    if not records:
        res_mesh = TriMesh(V, F, mesh.rest_vertices, validate=False)
        return RemeshResult(res_mesh, ProvenanceMap.identity(n0), np.arange(mesh.n_faces), [], [], [], {}, diags)
    _check_records(mesh, records)
    segments = build_segments(mesh, records)

    prov_rows: list[tuple[list[int], list[float]]] = []

    def new_vertex(cols, weights):
        prov_rows.append((list(cols), list(weights)))
        return n0 + len(prov_rows) - 1

    # edge points, merged along each edge
    ev = {}
    by_edge: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        by_edge[r.edge].append(i)
    for (lo, hi), ids in sorted(by_edge.items()):
        length = float(np.linalg.norm(V[hi] - V[lo]))
        ids.sort(key=lambda i: (records[i].t, i))
        last_t, last_v = None, None
        for i in ids:
            t = records[i].t
            if t * length < DEDUP_TOL:
                ev[i] = lo
            elif (1.0 - t) * length < DEDUP_TOL:
                ev[i] = hi
            elif last_t is not None and (t - last_t) * length < DEDUP_TOL:
                ev[i] = last_v
            else:
                ev[i] = new_vertex((lo, hi), (1.0 - t, t))
                last_t, last_v = t, ev[i]
                continue
            note(diags, "dedup", "intersection point merged", record=i, vertex=int(ev[i]))

    # face points, merged with anything already in the same face
    fv = {}
    fv_bary: dict[int, np.ndarray] = {}
    by_face: dict[int, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        by_face[r.face].append(i)
    for f, ids in sorted(by_face.items()):
        corners = F[f].tolist()
        kept = [(V[c], c, np.eye(3)[k]) for k, c in enumerate(corners)]
        for p, q in ((corners[0], corners[1]), (corners[1], corners[2]), (corners[2], corners[0])):
            for j in by_edge.get((min(p, q), max(p, q)), ()):
                w = _edge_bary(corners, records[j])
                kept.append((w @ V[corners], ev[j], w))
        for i in sorted(ids):
            w = np.asarray(records[i].bary)
            X = w @ V[corners]
            for Y, vid, wk in kept:
                if np.linalg.norm(X - Y) < DEDUP_TOL:
                    fv[i] = vid
                    fv_bary[i] = wk
                    note(diags, "dedup", "intersection point merged", record=i, vertex=int(vid))
                    break
            else:
                fv[i] = new_vertex(corners, w.tolist())
                fv_bary[i] = w
                kept.append((X, fv[i], w))

    def point_in(rec: int, f: int) -> int:
        return fv[rec] if records[rec].face == f else ev[rec]

    # which faces are touched and by what
    touched: dict[int, dict] = defaultdict(lambda: {"edge_recs": [], "face_recs": [], "segs": []})
    edge_faces = _edge_face_lists(mesh)
    for i, r in enumerate(records):
        for f in edge_faces[r.edge]:
            touched[f]["edge_recs"].append(i)
        touched[r.face]["face_recs"].append(i)
    for s, seg in enumerate(segments):
        touched[seg.face_a]["segs"].append(s)
        touched[seg.face_b]["segs"].append(s)

    new_faces: list[np.ndarray] = []
    parents: list[np.ndarray] = []
    seg_edges: list[SegmentEdge] = []
    chains: dict[tuple[int, int], tuple[int, ...]] = {}
    for f in range(mesh.n_faces):
        info = touched.get(f)
        if info is None:
            new_faces.append(F[f][None])
            parents.append(np.array([f]))
            continue
        corners = F[f].tolist()
        gids = list(corners)
        bary = [np.eye(3)[k] for k in range(3)]
        local = {v: k for k, v in enumerate(corners)}

        def add(gid, w):
            if gid not in local:
                local[gid] = len(gids)
                gids.append(gid)
                bary.append(np.asarray(w, dtype=np.float64))
            return local[gid]

        for i in sorted(set(info["edge_recs"])):
            add(ev[i], _edge_bary(corners, records[i]))
        for i in sorted(set(info["face_recs"])):
            add(fv[i], fv_bary[i])
        cons, cons_seg = [], []
        for s in info["segs"]:
            seg = segments[s]
            a = local[point_in(seg.rec_a, f)]
            b = local[seg.loop_vertex] if seg.is_loop else local[point_in(seg.rec_b, f)]
            if a == b:
                # both ends merged into one point: a zero-length piece of the path
                chains[(s, f)] = (int(gids[a]),)
                continue
            cons.append((a, b))
            cons_seg.append(s)
        P = np.array(bary)
        xyz = P @ V[corners]
        try:
            P2, tris, local_chains = triangulate_face(P, cons, xyz)
        except TriangulationError:
            # keep the surface conforming; the paths through this face stay open
            note(diags, "unresolved_degeneracy", "too many crossing segments in one face; segments dropped",
                 face=int(f), segments=[int(s) for s in cons_seg])
            P2, tris, local_chains = triangulate_face(P, [], xyz)
            cons_seg = []
        for w in P2[len(gids):]:
            gids.append(new_vertex(corners, w.tolist()))
        g = np.asarray(gids)
        new_faces.append(g[tris])
        parents.append(np.full(len(tris), f))
        for s, ch in zip(cons_seg, local_chains):
            seg = segments[s]
            gch = tuple(int(g[k]) for k in ch)
            chains[(s, f)] = gch
            recs = (seg.rec_a, seg.rec_b)
            seg_edges.extend(SegmentEdge(u, v, s, f, recs) for u, v in zip(gch[:-1], gch[1:]))

    rows = list(range(n0))
    cols = list(range(n0))
    vals = [1.0] * n0
    for k, (c, w) in enumerate(prov_rows):
        rows.extend([n0 + k] * len(c))
        cols.extend(c)
        vals.extend(w)
    W = sparse.csr_matrix((vals, (rows, cols)), shape=(n0 + len(prov_rows), n0))
    W.sum_duplicates()
    prov = ProvenanceMap(W)
    faces = np.vstack(new_faces)
    rest = None if mesh.rest_vertices is None else prov.apply(mesh.rest_vertices)
    out = TriMesh(prov.apply(V), faces, rest, validate=False)
    return RemeshResult(out, prov, np.concatenate(parents), seg_edges, list(records), segments, chains, diags)


def _edge_bary(corners: list[int], r: IntersectionRecord) -> np.ndarray:
    w = np.zeros(3)
    w[corners.index(r.edge[0])] = 1.0 - r.t
    w[corners.index(r.edge[1])] = r.t
    return w


def _edge_face_lists(mesh: TriMesh) -> dict[tuple[int, int], list[int]]:
    out: dict[tuple[int, int], list[int]] = defaultdict(list)
    for f, (a, b, c) in enumerate(mesh.faces.tolist()):
        for p, q in ((a, b), (b, c), (c, a)):
            out[(p, q) if p < q else (q, p)].append(f)
    return out


def intersection_point(record: IntersectionRecord, mesh: TriMesh, vertices: np.ndarray | None = None) -> np.ndarray:
    V = mesh.vertices if vertices is None else vertices
    return np.asarray(record.bary) @ V[mesh.faces[record.face]]
