"""Close garment holes with centroid fans."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .diagnostics import Diagnostic, note
from .mesh import BoundaryLoop, MeshError, TriMesh, find_boundary_loops


@dataclass(frozen=True, eq=False)
class ClosureResult:
    closed_mesh: TriMesh
    # one entry per added centroid: (boundary vertex indices, uniform weights)
    added_vertex_provenance: list[tuple[tuple[int, ...], tuple[float, ...]]]
    added_face_range: range
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def n_original(self) -> int:
        return self.closed_mesh.n_vertices - len(self.added_vertex_provenance)

    def weight_matrix(self) -> sparse.csr_matrix:
        """(n_closed, n_original) linear map from original to closed positions."""
        n0 = self.n_original
        rows = list(range(n0))
        cols = list(range(n0))
        vals = [1.0] * n0
        for k, (idx, w) in enumerate(self.added_vertex_provenance):
            rows.extend([n0 + k] * len(idx))
            cols.extend(idx)
            vals.extend(w)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n0 + len(self.added_vertex_provenance), n0))

    def closed_positions(self, x: np.ndarray) -> np.ndarray:
        """Closed-mesh positions for original positions ``x``."""
        x = np.asarray(x, dtype=np.float64)
        extra = [x[list(idx)].mean(axis=0) for idx, _ in self.added_vertex_provenance]
        return np.vstack([x, *extra]) if extra else x.copy()


def close_garment(mesh: TriMesh, loops_to_close, diagnostics: list | None = None) -> ClosureResult:
    """Fan-fill each selected loop around a vertex at the loop's mean position.

    A loop keeps its incident face on the left, so fan faces run against the
    loop direction; this traverses every boundary edge opposite to its face.
    """
    diags = [] if diagnostics is None else diagnostics
    loops = list(loops_to_close)
    if loops:
        known = {_canonical(lp.vertex_indices) for lp in find_boundary_loops(mesh)}
        for lp in loops:
            if _canonical(lp.vertex_indices) not in known:
                raise MeshError("loop does not belong to mesh", [Diagnostic("foreign_loop", "loop is not a boundary of this mesh", {"vertices": list(lp.vertex_indices)})])
    verts = [mesh.vertices]
    faces = [mesh.faces]
    prov = []
    n = mesh.n_vertices
    for lp in loops:
        idx = np.asarray(lp.vertex_indices, dtype=np.int64)
        c = mesh.vertices[idx].mean(axis=0)
        verts.append(c[None])
        fan = np.stack([np.full(len(idx), n), np.roll(idx, -1), idx], axis=1)
        faces.append(fan)
        prov.append((tuple(int(i) for i in idx), tuple([1.0 / len(idx)] * len(idx))))
        a, b = mesh.vertices[fan[:, 1]] - c, mesh.vertices[fan[:, 2]] - c
        zero = np.linalg.norm(np.cross(a, b), axis=1) == 0.0
        if zero.any():
            note(diags, "zero_area_fan", "fan triangle has zero area", centroid=int(n), count=int(zero.sum()))
        n += 1
    closed = TriMesh(np.vstack(verts), np.vstack(faces), _extend_rest(mesh, prov))
    return ClosureResult(closed, prov, range(mesh.n_faces, closed.n_faces), diags)


def _extend_rest(mesh: TriMesh, prov):
    if mesh.rest_vertices is None:
        return None
    r = mesh.rest_vertices
    extra = [r[list(idx)].mean(axis=0) for idx, _ in prov]
    return np.vstack([r, *extra]) if extra else r


def _canonical(cycle) -> tuple[int, ...]:
    k = cycle.index(min(cycle))
    return tuple(cycle[k:] + cycle[:k])


def select_loops(mesh: TriMesh, spec: str) -> list[BoundaryLoop]:
    """Parse ``all``, ``none`` or a comma list of loop indices."""
    loops = find_boundary_loops(mesh)
    spec = spec.strip().lower()
    if spec == "all":
        return loops
    if spec in ("none", ""):
        return []
    chosen = []
    for tok in spec.split(","):
        i = int(tok)
        if not 0 <= i < len(loops):
            raise ValueError(f"loop index {i} out of range (mesh has {len(loops)} loops)")
        chosen.append(loops[i])
    return chosen
