"""End-to-end penetration volume: closure, detection, remeshing, paths, volume.

:class:`SelfCollisionPipeline` fixes the closure once per garment; each
:meth:`~SelfCollisionPipeline.analyze` call recomputes the intersection
combinatorics for new positions and returns a :class:`FrozenLoss` that
evaluates the volume and its gradient with those combinatorics held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closure import ClosureResult, close_garment, select_loops
from .diagnostics import Diagnostic
from .gia import IntersectionPath, PenetrationRegion, extract_regions
from .mesh import BoundaryLoop, TriMesh, find_boundary_loops
from .selfx import (FAILURE_KINDS, IntersectionRecord, ProvenanceMap, RemeshResult,
                    detect_self_intersections, remesh_on_intersections)
from .volume import RegionGeometry, SelfCollisionLoss, region_geometries


@dataclass(frozen=True, eq=False)
class FrozenLoss:
    """Penetration volume as a function of garment positions with fixed combinatorics."""

    weights: ProvenanceMap
    geometries: tuple[RegionGeometry | None, ...]

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        if not any(g is not None for g in self.geometries):
            return 0.0, np.zeros_like(x)
        y = self.weights.apply(x)
        total = 0.0
        g = np.zeros_like(y)
        for geo in self.geometries:
            if geo is None:
                continue
            val, gr = geo.volume_grad(y)
            total += val
            g += gr
        return total, self.weights.pullback(g)

    def value(self, x: np.ndarray) -> float:
        return self.evaluate(x)[0]


@dataclass(frozen=True, eq=False)
class Analysis:
    closure: ClosureResult
    records: list[IntersectionRecord]
    remesh: RemeshResult
    paths: list[IntersectionPath]
    pairs: list[tuple[int, int]]
    regions: list[PenetrationRegion]
    loss: SelfCollisionLoss
    model: FrozenLoss
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        """True when some intersection was dropped because it stayed degenerate."""
        return any(d.kind in FAILURE_KINDS for d in self.diagnostics)


class SelfCollisionPipeline:
    """Penetration volume for one garment topology.

    ``loops`` is ``"all"``, ``"none"``, a comma list of loop indices, or an
    explicit list of :class:`BoundaryLoop`.
    """

    def __init__(self, mesh: TriMesh, loops="all"):
        self.mesh = mesh
        chosen = select_loops(mesh, loops) if isinstance(loops, str) else list(loops)
        self.closure_diagnostics: list[Diagnostic] = []
        self.closure = close_garment(mesh, chosen, self.closure_diagnostics)
        self._closure_w = ProvenanceMap(self.closure.weight_matrix())
        open_loops = _count_open(mesh, chosen)
        if open_loops:
            self.closure_diagnostics.append(Diagnostic(
                "unclosed_loops", "boundary loops left open; intersections reaching them cannot close",
                {"count": open_loops}))

    @property
    def closed_mesh(self) -> TriMesh:
        return self.closure.closed_mesh

    def analyze(self, x: np.ndarray | None = None) -> Analysis:
        x = self.mesh.vertices if x is None else np.asarray(x, dtype=np.float64)
        diags = list(self.closure_diagnostics)
        xc = self._closure_w.apply(x)
        closed = self.closed_mesh
        records = detect_self_intersections(closed, xc, diags)
        remesh = remesh_on_intersections(closed, records, xc, diags)
        paths, pairs, regions = extract_regions(remesh, diags)
        W = ProvenanceMap((remesh.provenance.matrix @ self._closure_w.matrix).tocsr())
        geos = tuple(region_geometries(regions, remesh, diags))
        model = FrozenLoss(W, geos)
        per, g = [], np.zeros((remesh.mesh.n_vertices, 3))
        for geo in geos:
            if geo is None:
                per.append(0.0)
                continue
            val, gr = geo.volume_grad(remesh.mesh.vertices)
            per.append(val)
            g += gr
        loss = SelfCollisionLoss(float(sum(per)), tuple(per), W.pullback(g))
        return Analysis(self.closure, records, remesh, paths, pairs, regions, loss, model, diags)

    def loss(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Penetration volume and gradient at ``x`` (combinatorics recomputed)."""
        a = self.analyze(x)
        return a.loss.value, a.loss.gradient


def _count_open(mesh: TriMesh, chosen: list[BoundaryLoop]) -> int:
    return len(find_boundary_loops(mesh)) - len(chosen)


def penetration_volume(mesh: TriMesh, loops="all") -> float:
    """Convenience: penetration volume of ``mesh`` at its current positions."""
    return SelfCollisionPipeline(mesh, loops).analyze().loss.value
