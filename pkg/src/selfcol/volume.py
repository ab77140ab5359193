"""Penetration volume from origin tetrahedra and its gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import note
from .gia import TWO_REGION, PenetrationRegion
from .selfx import ProvenanceMap, RemeshResult


def signed_volume(vertices: np.ndarray, faces: np.ndarray, signs: np.ndarray | None = None,
                  origin=None) -> float:
    """Sum of ``sign * det(a, b, c) / 6`` over faces, measured from ``origin``."""
    v = np.asarray(vertices, dtype=np.float64)
    if origin is not None:
        v = v - np.asarray(origin, dtype=np.float64)
    a, b, c = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    if signs is not None:
        det = det * signs
    return float(det.sum() / 6.0)


def signed_volume_grad(vertices: np.ndarray, faces: np.ndarray, signs: np.ndarray | None = None):
    """(value, gradient) of :func:`signed_volume` with respect to every vertex."""
    v = np.asarray(vertices, dtype=np.float64)
    a, b, c = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
    s = np.ones(len(faces)) if signs is None else np.asarray(signs, dtype=np.float64)
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    g = np.zeros_like(v)
    w = (s / 6.0)[:, None]
    np.add.at(g, faces[:, 0], w * np.cross(b, c))
    np.add.at(g, faces[:, 1], w * np.cross(c, a))
    np.add.at(g, faces[:, 2], w * np.cross(a, b))
    return float((s * det).sum() / 6.0), g


@dataclass(frozen=True, eq=False)
class RegionGeometry:
    """Frozen faces of one region with per-face orientation signs (+1 or -1)."""

    faces: np.ndarray
    signs: np.ndarray

    def volume(self, vertices: np.ndarray) -> float:
        return abs(signed_volume(vertices, self.faces, self.signs))

    def volume_grad(self, vertices: np.ndarray):
        val, g = signed_volume_grad(vertices, self.faces, self.signs)
        s = 1.0 if val >= 0 else -1.0
        return abs(val), s * g


def _realization_dirs(path, group_faces: set, remesh: RemeshResult, half_edge_face):
    """Per (segment, face) realization: +1 if the group face runs along the chain's a->b direction."""
    out = {}
    for s, f, _ in path.realizations:
        ch = remesh.chains[(s, f)]
        if len(ch) < 2:
            continue
        u, v = ch[0], ch[1]
        fwd = half_edge_face.get((u, v))
        bwd = half_edge_face.get((v, u))
        if fwd in group_faces and bwd not in group_faces:
            out[(s, f)] = 1
        elif bwd in group_faces and fwd not in group_faces:
            out[(s, f)] = -1
        else:
            out[(s, f)] = 0
    return out


def _half_edge_faces(remesh: RemeshResult) -> dict:
    he = remesh.mesh.half_edges
    return {(int(a), int(b)): i // 3 for i, (a, b) in enumerate(he.tolist())}


def region_geometry(region: PenetrationRegion, remesh: RemeshResult, diagnostics: list | None = None,
                    half_edge_face: dict | None = None) -> RegionGeometry | None:
    """Faces and orientation signs; None when the groups do not close up consistently.

    Along every segment, the two realizations must be traversed in opposite
    directions by their groups. For two-region groups the second group is
    flipped when that makes them agree.
    """
    faces = remesh.mesh.faces
    groups = [np.asarray(g, dtype=np.int64) for g in region.face_groups]
    signs = [np.ones(len(g)) for g in groups]
    if region.paths:
        hef = half_edge_face if half_edge_face is not None else _half_edge_faces(remesh)
        dirs = {}
        for path, g in zip(region.paths, groups):
            dirs.update(_realization_dirs(path, set(g.tolist()), remesh, hef))
        votes = []
        for (s, f), d in dirs.items():
            seg = remesh.segments[s]
            other = seg.face_b if f == seg.face_a else seg.face_a
            if f != seg.face_a or (s, other) not in dirs:
                continue
            votes.append(d * dirs[(s, other)])
        votes = np.array(votes)
        if region.kind == TWO_REGION and len(votes) and np.all(votes == 1):
            signs[1] = -signs[1]
            votes = -votes
        if len(votes) == 0 or not np.all(votes == -1):
            note(diagnostics, "open_region", "penetration faces do not form a consistently oriented closed surface",
                 paths=list(region.path_ids), agree=int((votes == -1).sum()), total=int(len(votes)))
            return None
    f_all = np.concatenate(groups)
    s_all = np.concatenate(signs)
    return RegionGeometry(faces[f_all], s_all)


def region_volume(region: PenetrationRegion, remesh: RemeshResult, vertices: np.ndarray | None = None,
                  diagnostics: list | None = None, origin=None) -> float:
    """Absolute enclosed volume of the region's faces (0.0 if the region is excluded)."""
    geo = region_geometry(region, remesh, diagnostics)
    if geo is None:
        return 0.0
    v = remesh.mesh.vertices if vertices is None else vertices
    return abs(signed_volume(v, geo.faces, geo.signs, origin))


@dataclass(frozen=True, eq=False)
class SelfCollisionLoss:
    value: float
    per_region: tuple[float, ...]
    gradient: np.ndarray

    def to_json(self) -> dict:
        return {"value": self.value, "per_region": list(self.per_region)}


def region_geometries(regions, remesh: RemeshResult, diagnostics: list | None = None) -> list[RegionGeometry | None]:
    """Geometry per region; a face already used by an earlier region is dropped from later ones."""
    hef = _half_edge_faces(remesh) if regions else {}
    used: set[int] = set()
    out = []
    for r in regions:
        geo = region_geometry(r, remesh, diagnostics, hef)
        if geo is not None:
            ids = np.concatenate([np.asarray(g, dtype=np.int64) for g in r.face_groups])
            keep = np.array([f not in used for f in ids.tolist()], dtype=bool)
            if not keep.all():
                note(diagnostics, "shared_faces", "faces shared with an earlier region counted once",
                     count=int((~keep).sum()))
            used.update(ids.tolist())
            geo = RegionGeometry(geo.faces[keep], geo.signs[keep])
        out.append(geo)
    return out


def total_loss(regions, remesh: RemeshResult, provenance: ProvenanceMap | None = None,
               vertices: np.ndarray | None = None, diagnostics: list | None = None) -> SelfCollisionLoss:
    """Sum of region volumes and its gradient with respect to the original vertices."""
    prov = provenance or remesh.provenance
    v = remesh.mesh.vertices if vertices is None else vertices
    g = np.zeros((len(v), 3))
    per = []
    for geo in region_geometries(regions, remesh, diagnostics):
        if geo is None:
            per.append(0.0)
            continue
        val, gr = geo.volume_grad(v)
        per.append(val)
        g += gr
    return SelfCollisionLoss(float(sum(per)), tuple(per), prov.pullback(g))
