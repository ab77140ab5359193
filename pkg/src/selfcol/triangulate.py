"""Constrained triangulation of one triangle in homogeneous barycentric coordinates.

Points are rows ``(w0, w1, w2)`` summing to one; rows 0..2 are the corners.
Orientation is ``sign det[p; q; r]``, which matches the parent triangle's
winding and is exactly zero for points on a common parent edge.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .predicates import ERR_COEFF, orient_bary


def _cross_abs(P: np.ndarray) -> np.ndarray:
    """Componentwise ``|a_y b_z| + |a_z b_y|`` etc. for every pair of rows."""
    return np.stack(
        [
            np.abs(P[:, None, 1] * P[None, :, 2]) + np.abs(P[:, None, 2] * P[None, :, 1]),
            np.abs(P[:, None, 0] * P[None, :, 2]) + np.abs(P[:, None, 2] * P[None, :, 0]),
            np.abs(P[:, None, 0] * P[None, :, 1]) + np.abs(P[:, None, 1] * P[None, :, 0]),
        ],
        axis=-1,
    )


def _cross_all(P: np.ndarray) -> np.ndarray:
    """``C[i, j] = P_i x P_j`` (np.cross is slow on tiny arrays)."""
    a, b = P[:, None, :], P[None, :, :]
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


@lru_cache(maxsize=64)
def _upper_pairs(n: int):
    iu, ju = np.triu_indices(n, 1)
    iu.setflags(write=False)
    ju.setflags(write=False)
    return iu, ju


def orientation_table(P: np.ndarray) -> np.ndarray:
    """``S[i, j, k] = orient(P_i, P_j, P_k)`` as int8, float-filtered with exact fallback."""
    C = _cross_all(P)
    A = np.abs(P)
    Cabs = _cross_abs(P)
    det = np.einsum("id,jkd->ijk", P, C)
    bound = ERR_COEFF * np.einsum("id,jkd->ijk", A, Cabs)
    S = np.sign(det).astype(np.int8)
    unsure = np.abs(det) <= bound
    S[unsure] = 0
    # exactly zero: a repeated point, or all three on one parent edge line
    n = len(P)
    r = np.arange(n)
    known = (r[:, None, None] == r[None, :, None]) | (r[None, :, None] == r[None, None, :]) | (r[:, None, None] == r[None, None, :])
    Z = (P == 0.0).astype(np.int8)
    known |= np.einsum("id,jd,kd->ijk", Z, Z, Z) > 0
    unsure &= ~known & ~((bound == 0.0) & (det == 0.0))
    for i, j, k in zip(*np.nonzero(unsure)):
        S[i, j, k] = orient_bary(P[i].tolist(), P[j].tolist(), P[k].tolist())
    return S


class TriangulationError(RuntimeError):
    pass


def _extend_table(P: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Orientation table for ``P`` when only its last row is new."""
    n = len(P)
    out = np.zeros((n, n, n), dtype=np.int8)
    out[:-1, :-1, :-1] = S
    q = P[-1]
    C = _cross_all(P)
    det = C @ q
    bound = ERR_COEFF * (_cross_abs(P) @ np.abs(q))
    T = np.sign(det).astype(np.int8)
    unsure = np.abs(det) <= bound
    T[unsure] = 0
    unsure &= ~(((P == 0.0)[:, None, :] & (P == 0.0)[None, :, :] & (q == 0.0)[None, None, :]).any(axis=2))
    unsure[np.arange(n), np.arange(n)] = False
    unsure[:, -1] = False
    unsure[-1, :] = False
    for i, j in zip(*np.nonzero(unsure)):
        T[i, j] = orient_bary(P[i].tolist(), P[j].tolist(), q.tolist())
    # cyclic shifts keep the sign, swaps flip it
    out[:, :, -1] = T
    out[:, -1, :] = -T
    out[-1, :, :] = T
    return out


def _first_crossing(S: np.ndarray, pieces: np.ndarray):
    """Row indices of the first pair of pieces that cross properly, or None."""
    if len(pieces) < 2:
        return None
    I, J = pieces[:, 0], pieces[:, 1]
    side = S[I[:, None], J[:, None], I[None, :]] * S[I[:, None], J[:, None], J[None, :]] < 0
    cross = side & side.T
    shared = ((I[:, None] == I[None, :]) | (I[:, None] == J[None, :])
              | (J[:, None] == I[None, :]) | (J[:, None] == J[None, :]))
    cross &= ~shared
    cross = np.triu(cross, 1)
    if not cross.any():
        return None
    x, y = np.argwhere(cross)[0]
    return int(x), int(y)


def _between(P, i, j, m) -> bool:
    """Collinear point m strictly inside segment ij (affine coordinates w1, w2)."""
    a, b, c = P[i, 1:], P[j, 1:], P[m, 1:]
    d = b - a
    s = float(np.dot(c - a, d))
    return 0.0 < s < float(np.dot(d, d))


def _split_on_points(P, S, edges):
    out = []
    for i, j in edges:
        on = [m for m in range(len(P)) if m != i and m != j and S[i, j, m] == 0 and _between(P, i, j, m)]
        if not on:
            out.append((i, j))
            continue
        d = P[j, 1:] - P[i, 1:]
        on.sort(key=lambda m: float(np.dot(P[m, 1:] - P[i, 1:], d)))
        chain = [i, *on, j]
        out.extend(zip(chain[:-1], chain[1:]))
    return out


def triangulate_face(P, constraints, xyz, max_steiner: int = 1024, snap: float = 1e-10):
    """Triangulate the corner triangle through all points, keeping constraints as edges.

    ``xyz`` gives 3D positions (used to prefer short edges and to snap).
    Crossing constraints are split at a new Steiner point, or routed through
    an existing point closer than ``snap`` to the crossing. Returns
    ``(P, triangles, chains)`` where ``P`` may have gained rows,
    ``triangles`` are counterclockwise local index triples and ``chains[c]``
    lists the local points along constraint ``c`` from its first endpoint.
    """
    P = np.array(P, dtype=np.float64)
    xyz = np.array(xyz, dtype=np.float64)
    corners3 = xyz[:3]
    cons = [tuple(c) for c in constraints]
    S = orientation_table(P)

    # constraints as explicit point chains; a Steiner point splits both crossing pieces
    # by construction, since rounding may leave it slightly off either line
    chains = []
    for c in cons:
        parts = _split_on_points(P, S, [c])
        chains.append([parts[0][0]] + [q for _, q in parts])
    for _ in range(max_steiner + 1):
        owner = [(ci, k) for ci, ch in enumerate(chains) for k in range(len(ch) - 1)]
        pieces = np.array([(chains[ci][k], chains[ci][k + 1]) for ci, k in owner], dtype=np.int64).reshape(-1, 2)
        hit = _first_crossing(S, pieces)
        if hit is None:
            break
        x, y = hit
        i, j = pieces[x]
        k, l = pieces[y]
        X = np.cross(np.cross(P[i], P[j]), np.cross(P[k], P[l]))
        X = X / X.sum()
        X3 = X @ corners3
        dist = np.linalg.norm(xyz - X3, axis=1)
        near = int(np.argmin(dist))
        if dist[near] < snap:
            # concurrent crossings: reuse the point instead of piling up new ones
            # that rounding leaves a hair off every line
            p = near
        else:
            P = np.vstack([P, X])
            xyz = np.vstack([xyz, X3])
            S = _extend_table(P, S)
            p = len(P) - 1
        for piece, (ci, pos) in sorted(((x, owner[x]), (y, owner[y])), key=lambda t: -t[1][1]):
            if p in pieces[piece]:
                continue
            if p in chains[ci]:
                raise TriangulationError("constraint would pass through one point twice")
            chains[ci].insert(pos + 1, p)
    else:
        raise TriangulationError("too many crossing constraints in one face")
    fixed = {(min(a, b), max(a, b)) for ch in chains for a, b in zip(ch[:-1], ch[1:])}

    # greedy shortest-first edges that neither cross an accepted edge nor run through a point
    n = len(P)
    iu, ju = _upper_pairs(n)
    d = P[ju, 1:] - P[iu, 1:]
    proj = np.einsum("emk,ek->em", P[None, :, 1:] - P[iu, None, 1:], d)
    through = (S[iu, ju, :] == 0) & (proj > 0.0) & (proj < np.einsum("ek,ek->e", d, d)[:, None])
    through[np.arange(len(iu)), iu] = False
    through[np.arange(len(iu)), ju] = False
    blocked = through.any(axis=1)

    def block_crossing(k, l):
        hit = (S[iu, ju, k] * S[iu, ju, l] < 0) & (S[k, l, iu] * S[k, l, ju] < 0)
        hit &= (iu != k) & (iu != l) & (ju != k) & (ju != l)
        np.logical_or(blocked, hit, out=blocked)

    for i, j in fixed:
        block_crossing(i, j)
    length = np.linalg.norm(xyz[iu] - xyz[ju], axis=1)
    for idx in np.argsort(length, kind="stable").tolist():
        i, j = int(iu[idx]), int(ju[idx])
        if blocked[idx] or (i, j) in fixed:
            continue
        fixed.add((i, j))
        block_crossing(i, j)

    adj = [set() for _ in range(n)]
    for i, j in fixed:
        adj[i].add(j)
        adj[j].add(i)
    tris = []
    for i, j in sorted(fixed):
        for k in sorted(adj[i] & adj[j]):
            if k <= j:
                continue
            s = S[i, j, k]
            if s == 0:
                continue
            inside = (S[i, j] == s) & (S[j, k] == s) & (S[k, i] == s)
            inside[[i, j, k]] = False
            if inside.any():
                continue
            tris.append((i, j, k) if s > 0 else (i, k, j))
    return P, np.array(tris, dtype=np.int64).reshape(-1, 3), chains
