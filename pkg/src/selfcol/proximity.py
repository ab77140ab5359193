"""Close vertex pairs that are not joined by a mesh edge."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import TriMesh


@dataclass(frozen=True, eq=False)
class SelfCollisionEdgeSet:
    """Sorted ``(i, j)`` rows with ``i < j`` and distance strictly below ``radius``."""

    pairs: np.ndarray
    radius: float

    def __len__(self) -> int:
        return len(self.pairs)

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.pairs}

    def to_json(self) -> dict:
        return {"radius": self.radius, "pairs": self.pairs.tolist()}


def build_self_collision_edges(mesh: TriMesh, radius: float, vertices: np.ndarray | None = None) -> SelfCollisionEdgeSet:
    """All non-edge vertex pairs closer than ``radius`` (uniform grid, cell = radius)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    x = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    pairs = kernels.grid_pairs(x, radius)
    if len(pairs) and mesh.n_faces:
        keys = pairs[:, 0] * mesh.n_vertices + pairs[:, 1]
        pairs = pairs[~np.isin(keys, mesh.edge_key_set)]
    return SelfCollisionEdgeSet(pairs, float(radius))

