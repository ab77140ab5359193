"""Synthetic meshes used by tests, benchmarks and the CLI demo scenes.

Grids use irrational-looking offsets so no mirror symmetry of a surface maps
grid vertices onto grid vertices; exact coincidences would make the
perturbation do work it does not need to.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def unit_cube() -> TriMesh:
    v = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    f = [
        (0, 2, 1), (1, 2, 3),  # z = 0
        (4, 5, 6), (5, 7, 6),  # z = 1
        (0, 1, 4), (1, 5, 4),  # y = 0
        (2, 6, 3), (3, 6, 7),  # y = 1
        (0, 4, 2), (2, 4, 6),  # x = 0
        (1, 3, 5), (3, 7, 5),  # x = 1
    ]
    return TriMesh(v, f)


def regular_tetrahedron(edge: float = 1.0) -> TriMesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    v *= edge / (2.0 * np.sqrt(2.0))
    f = [(0, 1, 2), (0, 2, 3), (0, 3, 1), (1, 3, 2)]
    return TriMesh(v, f)


def grid_sheet(nx: int, ny: int, size=(1.0, 1.0), origin=(0.0, 0.0)) -> TriMesh:
    """Flat sheet in z = 0 with ``nx * ny`` quads, each split along one diagonal."""
    xs = origin[0] + np.linspace(0.0, size[0], nx + 1)
    ys = origin[1] + np.linspace(0.0, size[1], ny + 1)
    X, Y = np.meshgrid(xs, ys)
    v = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    return TriMesh(v, _grid_faces(nx, ny), v)


def _grid_faces(nx: int, ny: int) -> np.ndarray:
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    a = (j * (nx + 1) + i).ravel()
    b, c, d = a + 1, a + nx + 1, a + nx + 2
    return np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])


def open_tube(n_around: int = 8, n_rings: int = 2, radius: float = 1.0, length: float = 1.0) -> TriMesh:
    """Cylinder side surface with two open ends, outward winding."""
    th = 2 * np.pi * np.arange(n_around) / n_around
    zs = np.linspace(0.0, length, n_rings)
    v = np.array([[radius * np.cos(t), radius * np.sin(t), z] for z in zs for t in th])
    f = []
    for r in range(n_rings - 1):
        for k in range(n_around):
            a = r * n_around + k
            b = r * n_around + (k + 1) % n_around
            f.extend([(a, b, b + n_around), (a, b + n_around, a + n_around)])
    return TriMesh(v, f)


def crossing_triangles() -> TriMesh:
    """Two triangles crossing at right angles through each other's interiors."""
    v = np.array([
        [-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, 0.0],
        [0.1, -0.2, -1.0], [0.1, 0.3, 1.0], [0.1, -0.7, 1.0],
    ])
    return TriMesh(v, [(0, 1, 2), (3, 4, 5)])


def loop_vertex_pair() -> TriMesh:
    """Triangles sharing vertex 0; an edge of the second passes through the first."""
    v = np.array([
        [0.0, 0.0, 0.0], [1.0, -0.5, 0.0], [1.0, 0.5, 0.0],
        [0.8, 0.1, -0.4], [0.8, -0.1, 0.4],
    ])
    return TriMesh(v, [(0, 1, 2), (0, 3, 4)])


def _orient_outward(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0
    return f if vol > 0 else f[:, ::-1].copy()


def pinched_torus(n_major: int = 64, n_minor: int = 16, major: float = 2.0, bulge: float = 1.0,
                  gap: float = 0.4, radius: float = 0.3) -> TriMesh:
    """Closed tube whose two long sides pass through each other near x = 0.

    The centerline ``(A cos p, sin p (B - (B - gap/2) sin^2 p), 0)`` comes
    within ``gap`` of itself, less than the tube diameter, so the tube
    overlaps itself in one lens-shaped region.
    """
    p = 2 * np.pi * (np.arange(n_major) + 0.37) / n_major
    q = 2 * np.pi * (np.arange(n_minor) + 0.29) / n_minor
    s = np.sin(p)
    c = np.stack([major * np.cos(p), s * (bulge - (bulge - gap / 2) * s**2), np.zeros_like(p)], 1)
    dc = np.stack([-major * np.sin(p),
                   np.cos(p) * (bulge - 3 * (bulge - gap / 2) * s**2), np.zeros_like(p)], 1)
    T = dc / np.linalg.norm(dc, axis=1, keepdims=True)
    N = np.stack([T[:, 1], -T[:, 0], np.zeros_like(p)], 1)
    Z = np.array([0.0, 0.0, 1.0])
    v = (c[:, None, :] + radius * (np.cos(q)[None, :, None] * N[:, None, :]
                                   + np.sin(q)[None, :, None] * Z)).reshape(-1, 3)
    f = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = i * n_minor + (j + 1) % n_minor
            cc = ((i + 1) % n_major) * n_minor + j
            d = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            f.extend([(a, cc, d), (a, d, b)])
    f = _orient_outward(v, np.array(f))
    return TriMesh(v, f, v)


def two_pinched_tori(offset=(6.0, 0.0, 0.0), **kw) -> TriMesh:
    t = pinched_torus(**kw)
    v = np.vstack([t.vertices, t.vertices + np.asarray(offset)])
    f = np.vstack([t.faces, t.faces + t.n_vertices])
    return TriMesh(v, f, v)


def folded_sheet(n: int = 20, extent: float = 1.5, a: float = 1.0, b: float = 0.5,
                 scale: float = 0.1) -> TriMesh:
    """Sheet folded onto itself: ``(x, y) -> (x, a y^2, b y (x^2 + y^2 - 1))``.

    Points ``(x, y)`` and ``(x, -y)`` meet on the unit circle, so the disk
    inside it is pinched into a closed pocket whose boundary is one path.
    The y grid is shifted so no two vertices are mirror images.
    """
    xs = np.linspace(-extent, extent, n + 1) + 0.0173 * (2 * extent / n)
    ys = np.linspace(-extent, extent, n + 1) + 0.311 * (2 * extent / n)
    X, Y = np.meshgrid(xs, ys)
    X, Y = X.ravel(), Y.ravel()
    v = scale * np.stack([X, a * Y**2, b * Y * (X**2 + Y**2 - 1.0)], 1)
    return TriMesh(v, _grid_faces(n, n), v)
