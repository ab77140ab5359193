"""Orientation predicates with exact fallback and symbolic perturbation.

Every mesh vertex ``i`` is perturbed to ``p_i + eps * d_i`` for an
infinitesimal ``eps`` and a fixed integer direction ``d_i`` derived from the
index. ``orient3d`` returns the sign of the perturbed determinant, so all
predicates answer consistently for one perturbed configuration and exact
zeros only survive when the directions themselves are degenerate.

A float evaluation with a conservative error bound decides most calls; the
rest are redone in exact integer arithmetic.
"""

from __future__ import annotations

import numpy as np

PERTURB_RANGE = 1 << 20
# conservative relative bound for a 3x3 determinant built from rounded differences
ERR_COEFF = 1e-14
# Below this magnitude coordinates are flushed to zero. Differences of the
# remaining values stay above ~1e-96, so no product in the filter underflows
# and the error bound remains valid.
FLUSH_BELOW = 1e-80

def perturbation_directions(n: int) -> np.ndarray:
    """Integer-valued (n, 3) float array of symbolic perturbation directions."""
    x = np.arange(3 * n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    span = np.uint64(2 * PERTURB_RANGE + 1)
    return ((x % span).astype(np.float64) - PERTURB_RANGE).reshape(n, 3)


_DIR_CACHE: list[np.ndarray] = []


def directions_for(n: int) -> np.ndarray:
    """Directions for vertex indices ``0..n-1``; vertex i's direction never depends on n."""
    if not _DIR_CACHE or len(_DIR_CACHE[0]) < n:
        size = max(n, 4096, 2 * len(_DIR_CACHE[0]) if _DIR_CACHE else 0)
        arr = perturbation_directions(size)
        arr.setflags(write=False)
        _DIR_CACHE[:] = [arr]
    return _DIR_CACHE[0][:n]


def flush_tiny(vertices: np.ndarray) -> np.ndarray:
    """Copy of ``vertices`` with magnitudes below ``FLUSH_BELOW`` set to 0.0."""
    v = np.array(vertices, dtype=np.float64)
    v[np.abs(v) < FLUSH_BELOW] = 0.0
    return v


def _det3(a, b, c):
    return (
        a[0] * (b[1] * c[2] - b[2] * c[1])
        - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
    )


def _perm3(a, b, c):
    return (
        abs(a[0]) * (abs(b[1] * c[2]) + abs(b[2] * c[1]))
        + abs(a[1]) * (abs(b[0] * c[2]) + abs(b[2] * c[0]))
        + abs(a[2]) * (abs(b[0] * c[1]) + abs(b[1] * c[0]))
    )


def _coefficients(P, D, det, perm):
    P1, P2, P3 = P
    D1, D2, D3 = D
    vals = (
        det(P1, P2, P3),
        det(D1, P2, P3) + det(P1, D2, P3) + det(P1, P2, D3),
        det(P1, D2, D3) + det(D1, P2, D3) + det(D1, D2, P3),
        det(D1, D2, D3),
    )
    if perm is None:
        return vals, None
    bounds = (
        perm(P1, P2, P3),
        perm(D1, P2, P3) + perm(P1, D2, P3) + perm(P1, P2, D3),
        perm(P1, D2, D3) + perm(D1, P2, D3) + perm(D1, D2, P3),
        perm(D1, D2, D3),
    )
    return vals, bounds


def _to_scaled_ints(values: list[float]) -> list[int]:
    ratios = [float(v).as_integer_ratio() for v in values]
    den = max(d for _, d in ratios)
    return [n * (den // d) for n, d in ratios]


def orient3d_exact(pa, pb, pc, pd, da, db, dc, dd) -> int:
    """Exact perturbed sign of det[pb-pa, pc-pa, pd-pa]; 0 only if fully degenerate."""
    coords = _to_scaled_ints([*pa, *pb, *pc, *pd])
    a, b, c, d = coords[0:3], coords[3:6], coords[6:9], coords[9:12]
    P = ([b[k] - a[k] for k in range(3)], [c[k] - a[k] for k in range(3)], [d[k] - a[k] for k in range(3)])
    ia, ib, ic, idd = ([int(x) for x in v] for v in (da, db, dc, dd))
    D = ([ib[k] - ia[k] for k in range(3)], [ic[k] - ia[k] for k in range(3)], [idd[k] - ia[k] for k in range(3)])
    vals, _ = _coefficients(P, D, _det3, None)
    for v in vals:
        if v:
            return 1 if v > 0 else -1
    return 0


class Orient3D:
    """Perturbed orientation over one vertex array, counting exact fallbacks."""

    def __init__(self, vertices: np.ndarray, directions: np.ndarray | None = None):
        self.v = flush_tiny(vertices)
        self.d = directions_for(len(self.v)) if directions is None else directions
        self.exact_calls = 0
        self.unperturbed_zero = 0
        self.degenerate = 0

    def value(self, a: int, b: int, c: int, d: int) -> float:
        """Unperturbed float determinant (used for coordinates, not signs)."""
        v = self.v
        pa = v[a]
        return float(_det3(v[b] - pa, v[c] - pa, v[d] - pa))

    def __call__(self, a: int, b: int, c: int, d: int) -> int:
        v, dd = self.v, self.d
        pa, pb, pc, pd = v[a].tolist(), v[b].tolist(), v[c].tolist(), v[d].tolist()
        P = (
            [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]],
            [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]],
            [pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2]],
        )
        qa, qb, qc, qd = dd[a].tolist(), dd[b].tolist(), dd[c].tolist(), dd[d].tolist()
        D = (
            [qb[0] - qa[0], qb[1] - qa[1], qb[2] - qa[2]],
            [qc[0] - qa[0], qc[1] - qa[1], qc[2] - qa[2]],
            [qd[0] - qa[0], qd[1] - qa[1], qd[2] - qa[2]],
        )
        c0 = _det3(*P)
        b0 = ERR_COEFF * _perm3(*P)
        if c0 > b0:
            return 1
        if -c0 > b0:
            return -1
        vals, bounds = _coefficients(P, D, _det3, _perm3)
        certain_zero = b0 == 0.0 and c0 == 0.0
        for k in range(1, 4):
            if not certain_zero:
                break
            self.unperturbed_zero += k == 1
            ck, bk = vals[k], ERR_COEFF * bounds[k]
            if ck > bk:
                return 1
            if -ck > bk:
                return -1
            certain_zero = bk == 0.0 and ck == 0.0
        self.exact_calls += 1
        s = orient3d_exact(pa, pb, pc, pd, qa, qb, qc, qd)
        if s == 0:
            self.degenerate += 1
        return s


# ---- face-local homogeneous 2D orientation ---------------------------------


def orient_bary(p, q, r) -> int:
    """Sign of det[p; q; r] for barycentric triples (each with positive sum).

    Equals the 2D orientation of the normalised points in the parent
    triangle's frame, and is exactly zero for points sharing a zero component.
    """
    d = _det3(p, q, r)
    bound = ERR_COEFF * _perm3(p, q, r)
    if d > bound:
        return 1
    if -d > bound:
        return -1
    if bound == 0.0 and d == 0.0:
        return 0
    ints = _to_scaled_ints([*p, *q, *r])
    e = _det3(ints[0:3], ints[3:6], ints[6:9])
    return (e > 0) - (e < 0)
