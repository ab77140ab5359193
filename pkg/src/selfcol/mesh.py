"""Indexed triangle meshes, topology queries and OBJ I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .diagnostics import Diagnostic


class MeshError(ValueError):
    """Invalid mesh topology or unreadable mesh file.

    ``issues`` carries structured records (one per offending element) so
    callers can report them without parsing the message.
    """

    def __init__(self, message: str, issues: list[Diagnostic] | None = None):
        super().__init__(message)
        self.issues = list(issues or [])


@dataclass(frozen=True)
class BoundaryLoop:
    """Cycle of vertex indices along a hole; the incident face lies to the left."""

    vertex_indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.vertex_indices)

    def edges(self) -> list[tuple[int, int]]:
        v = self.vertex_indices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]


def edge_keys(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * n + hi


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle surface. Counterclockwise faces point their normal outward.

    Arrays are copied and frozen on construction; derived topology is cached.
    """

    vertices: np.ndarray
    faces: np.ndarray
    rest_vertices: np.ndarray | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.rest_vertices is not None:
            r = np.array(self.rest_vertices, dtype=np.float64).reshape(-1, 3)
            r.setflags(write=False)
            object.__setattr__(self, "rest_vertices", r)
        if self.validate:
            self._check()

    def _check(self) -> None:
        n = len(self.vertices)
        f = self.faces
        if len(f) and (f.min() < 0 or f.max() >= n):
            raise MeshError("face index out of range")
        rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if rep.any():
            bad = np.flatnonzero(rep)
            raise MeshError(
                f"{len(bad)} face(s) repeat a vertex index",
                [Diagnostic("degenerate_face", "face repeats a vertex", {"face": int(i)}) for i in bad],
            )
        if len(f):
            # cyclic canonical form: rotate smallest index first
            k = np.argmin(f, axis=1)
            rows = np.arange(len(f))
            canon = np.stack([f[rows, k], f[rows, (k + 1) % 3], f[rows, (k + 2) % 3]], axis=1)
            _, first, counts = np.unique(canon, axis=0, return_index=True, return_counts=True)
            if (counts > 1).any():
                raise MeshError("duplicate faces present")
        if self.rest_vertices is not None and len(self.rest_vertices) != n:
            raise MeshError("rest_vertices length differs from vertices")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity and rest state, new positions (no revalidation)."""
        return TriMesh(vertices, self.faces, self.rest_vertices, validate=False)

    # ---- topology -------------------------------------------------------

    @cached_property
    def half_edges(self) -> np.ndarray:
        """(3F, 2) directed edges; row ``3*f + k`` is ``faces[f][k] -> faces[f][k+1]``."""
        f = self.faces
        return np.stack([f, np.roll(f, -1, axis=1)], axis=2).reshape(-1, 2)

    @cached_property
    def _edge_maps(self):
        he = self.half_edges
        keys = edge_keys(he[:, 0], he[:, 1], self.n_vertices)
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        edges = np.stack([uniq // self.n_vertices, uniq % self.n_vertices], axis=1)
        return edges, inverse.reshape(-1), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (lo, hi) pairs."""
        return self._edge_maps[0]

    @property
    def face_edges(self) -> np.ndarray:
        """(F, 3) edge id of face edge ``faces[f][k] -> faces[f][k+1]``."""
        return self._edge_maps[1].reshape(-1, 3)

    @property
    def edge_face_counts(self) -> np.ndarray:
        return self._edge_maps[2]

    @cached_property
    def edge_key_set(self) -> np.ndarray:
        """Sorted int64 keys ``lo * n + hi`` of all mesh edges."""
        e = self.edges
        return e[:, 0] * self.n_vertices + e[:, 1]

    @cached_property
    def face_adjacency(self) -> np.ndarray:
        """(F, 3) neighbour across face edge k, or -1 on the boundary."""
        fe = self.face_edges.reshape(-1)
        order = np.argsort(fe, kind="stable")
        adj = np.full(len(fe), -1, dtype=np.int64)
        sorted_e = fe[order]
        same = sorted_e[1:] == sorted_e[:-1]
        a = order[:-1][same]
        b = order[1:][same]
        adj[a] = b // 3
        adj[b] = a // 3
        return adj.reshape(-1, 3)

    def non_manifold_edges(self) -> np.ndarray:
        return self.edges[self.edge_face_counts > 2]

    # ---- geometry -------------------------------------------------------

    def face_areas(self, vertices: np.ndarray | None = None) -> np.ndarray:
        v = self.vertices if vertices is None else vertices
        a, b, c = (v[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def surface_area(mesh: TriMesh) -> float:
    """Total area of the mesh's triangles."""
    return float(mesh.face_areas().sum())


def find_boundary_loops(mesh: TriMesh) -> list[BoundaryLoop]:
    """Return every hole boundary as a closed loop.

    Loops follow the direction in which their single incident face
    traverses each edge, so that face is on the left. At vertices where two
    holes touch, the walk continues around the vertex fan, which keeps each
    loop on its own hole.
    """
    if (mesh.edge_face_counts > 2).any():
        raise MeshError("non-manifold edge present")
    he = mesh.half_edges
    n = mesh.n_vertices
    directed = {(int(a), int(b)): i for i, (a, b) in enumerate(he)}
    if len(directed) != len(he):
        raise MeshError("inconsistent face orientation: a directed edge is used twice")
    boundary = [i for i, (a, b) in enumerate(he) if (int(b), int(a)) not in directed]
    if not boundary:
        return []

    def next_boundary(h: int) -> int:
        # rotate about the head vertex through interior faces until a boundary half-edge
        tip = int(he[h, 1])
        f = h // 3
        cur = 3 * f + (h % 3 + 1) % 3  # tip -> x inside face f
        for _ in range(len(he)):
            a, b = int(he[cur, 0]), int(he[cur, 1])
            twin = directed.get((b, a))
            if twin is None:
                return cur
            f = twin // 3
            cur = 3 * f + (twin % 3 + 1) % 3
        raise MeshError("could not walk boundary fan", [Diagnostic("open_boundary", "dangling boundary chain", {"vertex": tip})])

    seen: set[int] = set()
    loops: list[BoundaryLoop] = []
    for start in sorted(boundary, key=lambda h: (int(he[h, 0]), int(he[h, 1]))):
        if start in seen:
            continue
        cycle = []
        h = start
        while h not in seen:
            seen.add(h)
            cycle.append(int(he[h, 0]))
            h = next_boundary(h)
        if h != start:
            raise MeshError("boundary chain does not close", [Diagnostic("open_boundary", "non-cyclic boundary chain", {"start_vertex": cycle[0]})])
        if len(cycle) < 3:
            raise MeshError("boundary loop shorter than 3")
        loops.append(BoundaryLoop(tuple(cycle)))
    return loops


# ---- OBJ ----------------------------------------------------------------


def load_obj(path: str | Path) -> TriMesh:
    """Read ``v``/``f`` records; polygons are fan-triangulated.

    Raises :class:`MeshError` on parse failure, an empty mesh, or edges with
    more than two incident faces (listed in ``issues``).
    """
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif tag == "f":
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    if len(idx) < 3:
                        raise ValueError("face needs at least 3 vertices")
                    for k in range(1, len(idx) - 1):
                        faces.append((idx[0], idx[k], idx[k + 1]))
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: {exc}") from exc
    if not verts or not faces:
        raise MeshError(f"{path}: empty mesh")
    mesh = TriMesh(np.array(verts), np.array(faces))
    bad = mesh.non_manifold_edges()
    if len(bad):
        counts = mesh.edge_face_counts[mesh.edge_face_counts > 2]
        raise MeshError(
            f"{path}: {len(bad)} non-manifold edge(s)",
            [Diagnostic("non_manifold_edge", "edge has more than two faces", {"edge": [int(a), int(b)], "faces": int(c)}) for (a, b), c in zip(bad, counts)],
        )
    return mesh


def save_obj(path: str | Path, mesh: TriMesh, mtl: str | None = None, face_groups: dict[str, np.ndarray] | None = None) -> None:
    """Write an OBJ with 9 significant digits.

    ``face_groups`` maps material names to face-index arrays; faces not listed
    fall in the ``default`` material. Requires ``mtl`` to be useful.
    """
    lines = []
    if mtl:
        lines.append(f"mtllib {mtl}")
    lines.extend(f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices)
    if face_groups:
        label = np.full(mesh.n_faces, "default", dtype=object)
        for name in sorted(face_groups):
            label[np.asarray(face_groups[name], dtype=np.int64)] = name
        current = None
        for fi, (a, b, c) in enumerate(mesh.faces):
            if label[fi] != current:
                current = label[fi]
                lines.append(f"usemtl {current}")
            lines.append(f"f {a + 1} {b + 1} {c + 1}")
    else:
        lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
