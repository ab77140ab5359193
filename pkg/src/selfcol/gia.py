"""Intersection paths, region pairing and lockstep flood fill.

A segment is realized twice in the remeshed surface, once in each of its
two faces. Realizations meet end to end at shared points: an edge point
joins the realizations in the faces around that edge, a face point joins
the realizations inside that face, and a loop vertex joins the two
realizations of its own segment. Following these joins gives the paths.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import kernels
from .diagnostics import note
from .selfx import RemeshResult

FOLDED = "folded"
TWO_REGION = "two-region"


@dataclass(frozen=True)
class IntersectionPath:
    """Closed chain of remeshed vertices along segment edges.

    ``realizations`` lists ``(segment, original face, reversed)`` in walk
    order; ``vertices`` is the cyclic vertex chain (first vertex not repeated).
    """

    realizations: tuple[tuple[int, int, bool], ...]
    vertices: tuple[int, ...]
    contains_loop_vertex: bool
    loop_vertices: tuple[int, ...] = ()

    @property
    def edges(self) -> list[tuple[int, int]]:
        v = self.vertices
        out = [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]
        return [e for e in out if e[0] != e[1]]

    def edge_keys(self, n: int) -> np.ndarray:
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        return np.unique(np.minimum(e[:, 0], e[:, 1]) * n + np.maximum(e[:, 0], e[:, 1]))

    def segments(self) -> set[int]:
        return {s for s, _, _ in self.realizations}

    def to_json(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "contains_loop_vertex": self.contains_loop_vertex,
            "loop_vertices": list(self.loop_vertices),
        }


@dataclass(frozen=True, eq=False)
class PenetrationRegion:
    """Penetrating faces bounded by one path (folded) or a pair of paths (two-region).

    ``side_counts[k]`` holds (chosen side, other side) face counts of fill k.
    """

    kind: str
    path_ids: tuple[int, ...]
    paths: tuple[IntersectionPath, ...]
    face_groups: tuple[np.ndarray, ...]
    side_counts: tuple[tuple[int, int], ...]

    @property
    def min_face(self) -> int:
        return int(min(int(g.min()) for g in self.face_groups if len(g)))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "paths": list(self.path_ids),
            "face_counts": [int(len(g)) for g in self.face_groups],
            "side_counts": [list(c) for c in self.side_counts],
        }


def _endpoint_key(remesh: RemeshResult, s: int, f: int, end: int):
    seg = remesh.segments[s]
    if end == 1 and seg.is_loop:
        return ("v", seg.loop_vertex)
    rec = seg.rec_a if end == 0 else seg.rec_b
    return ("f" if remesh.records[rec].face == f else "e", rec)


def trace_paths(remesh: RemeshResult, diagnostics: list | None = None) -> list[IntersectionPath]:
    """Chain all segment realizations into closed paths.

    Chains that do not close are reported and dropped. Paths are ordered by
    their smallest segment index.
    """
    nodes = sorted(remesh.chains)
    if not nodes:
        return []
    node_id = {nd: i for i, nd in enumerate(nodes)}
    ends: dict[tuple, list[tuple[int, int]]] = defaultdict(list)
    for i, (s, f) in enumerate(nodes):
        for end in (0, 1):
            ends[_endpoint_key(remesh, s, f, end)].append((i, end))
    link: dict[tuple[int, int], tuple[int, int]] = {}
    for key in sorted(ends):
        items = sorted(ends[key])
        for a, b in zip(items[0::2], items[1::2]):
            link[a] = b
            link[b] = a
        if len(items) % 2:
            note(diagnostics, "open_chain", "intersection chain ends without closing", key=[key[0], int(key[1])])

    seen = [False] * len(nodes)
    paths = []
    for start in range(len(nodes)):
        if seen[start]:
            continue
        walk, closed = _walk(start, link, seen)
        if not closed:
            segs = sorted({nodes[i][0] for i, _ in walk})
            note(diagnostics, "open_chain", "open intersection chain excluded", segments=segs)
            continue
        reals, verts, loops = [], [], []
        for i, entered in walk:
            s, f = nodes[i]
            rev = entered == 1
            ch = remesh.chains[(s, f)]
            ch = ch[::-1] if rev else ch
            verts.extend(ch[:-1])
            reals.append((s, f, rev))
            exit_end = 1 - entered
            if _endpoint_key(remesh, s, f, exit_end)[0] == "v":
                loops.append(remesh.segments[s].loop_vertex)
        paths.append(IntersectionPath(tuple(reals), tuple(verts), bool(loops), tuple(sorted(set(loops)))))
    paths.sort(key=lambda p: min(p.segments()))
    return paths


def _walk(start, link, seen):
    """Follow links from ``start`` leaving through end 1. Returns ([(node, entered_end)], closed)."""
    walk = []
    node, entered = start, 0
    while True:
        seen[node] = True
        walk.append((node, entered))
        nxt = link.get((node, 1 - entered))
        if nxt is None:
            break
        node, entered = nxt
        if node == start and entered == 0:
            return walk, True
        if seen[node]:
            break
    # mark the rest of an open chain from the other side
    nxt = link.get((start, 0))
    while nxt is not None and not seen[nxt[0]]:
        seen[nxt[0]] = True
        walk.append(nxt)
        nxt = link.get((nxt[0], 1 - nxt[1]))
    return walk, False


def pair_two_region_paths(paths: list[IntersectionPath], remesh: RemeshResult,
                          diagnostics: list | None = None) -> list[tuple[int, int]]:
    """Pair loop-free paths that carry the two realizations of the same segments."""
    owner = {}
    for k, p in enumerate(paths):
        for s, f, _ in p.realizations:
            owner[(s, f)] = k
    pairs = []
    for k, p in enumerate(paths):
        if p.contains_loop_vertex:
            continue
        partners = set()
        for s, f, _ in p.realizations:
            seg = remesh.segments[s]
            other = seg.face_b if f == seg.face_a else seg.face_a
            partners.add(owner.get((s, other), -1))
        if len(partners) == 1:
            (j,) = partners
            if j > k and not paths[j].contains_loop_vertex:
                pairs.append((k, j))
                continue
            if j >= 0 and j < k and not paths[j].contains_loop_vertex:
                continue
        note(diagnostics, "unpaired_path", "loop-free path without a unique partner path; excluded",
             path=k, partners=sorted(int(x) for x in partners))
    return pairs


class _FaceGraph:
    """Edge adjacency of the remeshed faces plus edge-key lookup."""

    def __init__(self, remesh: RemeshResult):
        m = remesh.mesh
        self.n = m.n_vertices
        self.adj = m.face_adjacency
        he = m.half_edges
        self.face_keys = (np.minimum(he[:, 0], he[:, 1]) * self.n + np.maximum(he[:, 0], he[:, 1])).reshape(-1, 3)
        order = np.argsort(self.face_keys.ravel(), kind="stable")
        self.sorted_keys = self.face_keys.ravel()[order]
        self.sorted_faces = order // 3

    def faces_of(self, key: int) -> list[int]:
        lo = np.searchsorted(self.sorted_keys, key, "left")
        hi = np.searchsorted(self.sorted_keys, key, "right")
        return sorted(int(f) for f in self.sorted_faces[lo:hi])


def _fill_one(path: IntersectionPath, graph: _FaceGraph, diagnostics):
    keys = path.edge_keys(graph.n)
    blocked = np.isin(graph.face_keys, keys)
    seeds = None
    for u, v in path.edges:
        fs = graph.faces_of(min(u, v) * graph.n + max(u, v))
        if len(fs) == 2:
            seeds = fs
            break
    if seeds is None:
        note(diagnostics, "flood_leak", "path has no interior edge to seed a fill", path_vertices=len(path.vertices))
        return None
    labels, na, nb, _, leaked = kernels.lockstep_fill(graph.adj, blocked, seeds[0], seeds[1])
    if leaked:
        note(diagnostics, "flood_leak", "fill crossed the path; path does not separate the surface",
             seeds=list(seeds))
        return None
    side_a = np.flatnonzero(labels == 1)
    side_b = np.flatnonzero(labels == 2)
    pick_a = na < nb or (na == nb and side_a.min() < side_b.min())
    chosen, other = (side_a, side_b) if pick_a else (side_b, side_a)
    return chosen, (len(chosen), len(other))


def flood_fill_penetration(path_ids, paths: list[IntersectionPath], remesh: RemeshResult,
                           diagnostics: list | None = None, graph: _FaceGraph | None = None):
    """Region for one folded path (an int) or a pair of path indices; None on failure."""
    graph = graph or _FaceGraph(remesh)
    ids = (path_ids,) if isinstance(path_ids, (int, np.integer)) else tuple(path_ids)
    groups, counts = [], []
    for k in ids:
        res = _fill_one(paths[k], graph, diagnostics)
        if res is None:
            return None
        groups.append(res[0])
        counts.append(res[1])
    kind = FOLDED if len(ids) == 1 else TWO_REGION
    return PenetrationRegion(kind, ids, tuple(paths[k] for k in ids), tuple(groups), tuple(counts))


def extract_regions(remesh: RemeshResult, diagnostics: list | None = None):
    """Trace, pair and fill. Returns ``(paths, pairs, regions)``; regions sorted by smallest face."""
    paths = trace_paths(remesh, diagnostics)
    pairs = pair_two_region_paths(paths, remesh, diagnostics)
    if not paths:
        return paths, pairs, []
    graph = _FaceGraph(remesh)
    regions = []
    for k, p in enumerate(paths):
        if p.contains_loop_vertex:
            r = flood_fill_penetration(k, paths, remesh, diagnostics, graph)
            if r is not None:
                regions.append(r)
    for pr in pairs:
        r = flood_fill_penetration(pr, paths, remesh, diagnostics, graph)
        if r is not None:
            regions.append(r)
    regions.sort(key=lambda r: r.min_face)
    return paths, pairs, regions
