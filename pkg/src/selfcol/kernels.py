"""Hot loops: numba kernels and their numpy fallbacks.

Each public function dispatches on :func:`selfcol._accel.use_numba`; the
``*_nb`` and ``*_np`` variants are exported for benchmarks and for the tests
that check both paths agree. Sign decisions in both paths use the same
float filter, so whatever they certify is identical; uncertain cases are
reported rather than guessed and are settled by :mod:`selfcol.predicates`.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ._accel import JIT_OPTS, njit, use_numba
from .predicates import ERR_COEFF

# pair classification codes
NO_HIT = 0
HIT = 1
UNSURE = 2


# ---------------------------------------------------------------------------
# perturbed orientation, float-certified


@njit(**JIT_OPTS)
def _det(a0, a1, a2, b0, b1, b2, c0, c1, c2):
    return a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0)


@njit(**JIT_OPTS)
def _perm(a0, a1, a2, b0, b1, b2, c0, c1, c2):
    return (
        abs(a0) * (abs(b1 * c2) + abs(b2 * c1))
        + abs(a1) * (abs(b0 * c2) + abs(b2 * c0))
        + abs(a2) * (abs(b0 * c1) + abs(b1 * c0))
    )


@njit(**JIT_OPTS)
def orient_sos_nb(V, D, a, b, c, d):
    """+1/-1 when certified, 0 when the float filter cannot decide."""
    p10 = V[b, 0] - V[a, 0]
    p11 = V[b, 1] - V[a, 1]
    p12 = V[b, 2] - V[a, 2]
    p20 = V[c, 0] - V[a, 0]
    p21 = V[c, 1] - V[a, 1]
    p22 = V[c, 2] - V[a, 2]
    p30 = V[d, 0] - V[a, 0]
    p31 = V[d, 1] - V[a, 1]
    p32 = V[d, 2] - V[a, 2]
    c0 = _det(p10, p11, p12, p20, p21, p22, p30, p31, p32)
    b0 = ERR_COEFF * _perm(p10, p11, p12, p20, p21, p22, p30, p31, p32)
    if c0 > b0:
        return 1
    if -c0 > b0:
        return -1
    if not (b0 == 0.0 and c0 == 0.0):
        return 0
    q10 = D[b, 0] - D[a, 0]
    q11 = D[b, 1] - D[a, 1]
    q12 = D[b, 2] - D[a, 2]
    q20 = D[c, 0] - D[a, 0]
    q21 = D[c, 1] - D[a, 1]
    q22 = D[c, 2] - D[a, 2]
    q30 = D[d, 0] - D[a, 0]
    q31 = D[d, 1] - D[a, 1]
    q32 = D[d, 2] - D[a, 2]
    c1 = (
        _det(q10, q11, q12, p20, p21, p22, p30, p31, p32)
        + _det(p10, p11, p12, q20, q21, q22, p30, p31, p32)
        + _det(p10, p11, p12, p20, p21, p22, q30, q31, q32)
    )
    b1 = ERR_COEFF * (
        _perm(q10, q11, q12, p20, p21, p22, p30, p31, p32)
        + _perm(p10, p11, p12, q20, q21, q22, p30, p31, p32)
        + _perm(p10, p11, p12, p20, p21, p22, q30, q31, q32)
    )
    if c1 > b1:
        return 1
    if -c1 > b1:
        return -1
    if not (b1 == 0.0 and c1 == 0.0):
        return 0
    c2 = (
        _det(p10, p11, p12, q20, q21, q22, q30, q31, q32)
        + _det(q10, q11, q12, p20, p21, p22, q30, q31, q32)
        + _det(q10, q11, q12, q20, q21, q22, p30, p31, p32)
    )
    b2 = ERR_COEFF * (
        _perm(p10, p11, p12, q20, q21, q22, q30, q31, q32)
        + _perm(q10, q11, q12, p20, p21, p22, q30, q31, q32)
        + _perm(q10, q11, q12, q20, q21, q22, p30, p31, p32)
    )
    if c2 > b2:
        return 1
    if -c2 > b2:
        return -1
    if not (b2 == 0.0 and c2 == 0.0):
        return 0
    c3 = _det(q10, q11, q12, q20, q21, q22, q30, q31, q32)
    b3 = ERR_COEFF * _perm(q10, q11, q12, q20, q21, q22, q30, q31, q32)
    if c3 > b3:
        return 1
    if -c3 > b3:
        return -1
    return 0


def orient_sos_np(V, D, a, b, c, d):
    """Vectorised :func:`orient_sos_nb` over index arrays."""
    P1, P2, P3 = V[b] - V[a], V[c] - V[a], V[d] - V[a]
    Q1, Q2, Q3 = D[b] - D[a], D[c] - D[a], D[d] - D[a]

    def det(x, y, z):
        return _det(x[:, 0], x[:, 1], x[:, 2], y[:, 0], y[:, 1], y[:, 2], z[:, 0], z[:, 1], z[:, 2])

    def perm(x, y, z):
        return _perm_np(x, y, z)

    out = np.zeros(len(a), dtype=np.int8)
    pending = np.ones(len(a), dtype=bool)
    terms = (
        lambda: (det(P1, P2, P3), perm(P1, P2, P3)),
        lambda: (det(Q1, P2, P3) + det(P1, Q2, P3) + det(P1, P2, Q3), perm(Q1, P2, P3) + perm(P1, Q2, P3) + perm(P1, P2, Q3)),
        lambda: (det(P1, Q2, Q3) + det(Q1, P2, Q3) + det(Q1, Q2, P3), perm(P1, Q2, Q3) + perm(Q1, P2, Q3) + perm(Q1, Q2, P3)),
        lambda: (det(Q1, Q2, Q3), perm(Q1, Q2, Q3)),
    )
    for term in terms:
        if not pending.any():
            break
        val, bound = term()
        bound = ERR_COEFF * bound
        pos = pending & (val > bound)
        neg = pending & (-val > bound)
        out[pos] = 1
        out[neg] = -1
        pending &= ~(pos | neg) & (bound == 0.0) & (val == 0.0)
    return out


def _perm_np(x, y, z):
    return (
        np.abs(x[:, 0]) * (np.abs(y[:, 1] * z[:, 2]) + np.abs(y[:, 2] * z[:, 1]))
        + np.abs(x[:, 1]) * (np.abs(y[:, 0] * z[:, 2]) + np.abs(y[:, 2] * z[:, 0]))
        + np.abs(x[:, 2]) * (np.abs(y[:, 0] * z[:, 1]) + np.abs(y[:, 1] * z[:, 0]))
    )


# ---------------------------------------------------------------------------
# triangle pair classification
#
# A and B hold the vertex ids of the two faces; when ``shared`` is set both
# rows are rotated so the common vertex comes first.


@njit(**JIT_OPTS)
def _edge_crosses(V, D, p, q, t0, t1, t2, sp, sq):
    """1 crosses, 0 misses, -1 undecided; sp/sq are p, q against plane(t)."""
    if sp == 0 or sq == 0:
        return -1
    if sp == sq:
        return 0
    u = orient_sos_nb(V, D, p, q, t0, t1)
    v = orient_sos_nb(V, D, p, q, t1, t2)
    w = orient_sos_nb(V, D, p, q, t2, t0)
    if u == 0 or v == 0 or w == 0:
        return -1
    return 1 if (u == v and v == w) else 0


@njit(**JIT_OPTS)
def classify_pairs_nb(V, D, A, B, shared):
    n = A.shape[0]
    codes = np.zeros(n, dtype=np.int8)
    for k in range(n):
        a0, a1, a2 = A[k, 0], A[k, 1], A[k, 2]
        b0, b1, b2 = B[k, 0], B[k, 1], B[k, 2]
        if shared[k]:
            s1 = orient_sos_nb(V, D, b0, b1, b2, a1)
            s2 = orient_sos_nb(V, D, b0, b1, b2, a2)
            r1 = orient_sos_nb(V, D, a0, a1, a2, b1)
            r2 = orient_sos_nb(V, D, a0, a1, a2, b2)
            ea = _edge_crosses(V, D, a1, a2, b0, b1, b2, s1, s2)
            eb = _edge_crosses(V, D, b1, b2, a0, a1, a2, r1, r2)
            if ea < 0 or eb < 0:
                codes[k] = UNSURE
            elif ea + eb == 0:
                codes[k] = NO_HIT
            elif ea + eb == 1:
                codes[k] = HIT
            else:
                codes[k] = UNSURE
            continue
        sa0 = orient_sos_nb(V, D, b0, b1, b2, a0)
        sa1 = orient_sos_nb(V, D, b0, b1, b2, a1)
        sa2 = orient_sos_nb(V, D, b0, b1, b2, a2)
        if sa0 != 0 and sa0 == sa1 and sa1 == sa2:
            continue
        sb0 = orient_sos_nb(V, D, a0, a1, a2, b0)
        sb1 = orient_sos_nb(V, D, a0, a1, a2, b1)
        sb2 = orient_sos_nb(V, D, a0, a1, a2, b2)
        if sb0 != 0 and sb0 == sb1 and sb1 == sb2:
            continue
        hits = 0
        unsure = False
        for e in range(6):
            if e < 3:
                i, j = e, (e + 1) % 3
                p = A[k, i]
                q = A[k, j]
                sp = sa0 if i == 0 else (sa1 if i == 1 else sa2)
                sq = sa0 if j == 0 else (sa1 if j == 1 else sa2)
                r = _edge_crosses(V, D, p, q, b0, b1, b2, sp, sq)
            else:
                i, j = e - 3, (e - 2) % 3
                p = B[k, i]
                q = B[k, j]
                sp = sb0 if i == 0 else (sb1 if i == 1 else sb2)
                sq = sb0 if j == 0 else (sb1 if j == 1 else sb2)
                r = _edge_crosses(V, D, p, q, a0, a1, a2, sp, sq)
            if r < 0:
                unsure = True
            else:
                hits += r
        if unsure or (hits != 0 and hits != 2):
            codes[k] = UNSURE
        elif hits == 2:
            codes[k] = HIT
    return codes


def _edge_crosses_np(V, D, p, q, T, sp, sq):
    res = np.zeros(len(p), dtype=np.int8)
    undecided = (sp == 0) | (sq == 0)
    cand = ~undecided & (sp != sq)
    if cand.any():
        idx = np.flatnonzero(cand)
        pp, qq, tt = p[idx], q[idx], T[idx]
        u = orient_sos_np(V, D, pp, qq, tt[:, 0], tt[:, 1])
        v = orient_sos_np(V, D, pp, qq, tt[:, 1], tt[:, 2])
        w = orient_sos_np(V, D, pp, qq, tt[:, 2], tt[:, 0])
        bad = (u == 0) | (v == 0) | (w == 0)
        undecided[idx[bad]] = True
        res[idx[~bad & (u == v) & (v == w)]] = 1
    res[undecided] = -1
    return res


def classify_pairs_np(V, D, A, B, shared):
    n = len(A)
    codes = np.zeros(n, dtype=np.int8)
    sh = np.flatnonzero(shared)
    if len(sh):
        a, b = A[sh], B[sh]
        s1 = orient_sos_np(V, D, b[:, 0], b[:, 1], b[:, 2], a[:, 1])
        s2 = orient_sos_np(V, D, b[:, 0], b[:, 1], b[:, 2], a[:, 2])
        r1 = orient_sos_np(V, D, a[:, 0], a[:, 1], a[:, 2], b[:, 1])
        r2 = orient_sos_np(V, D, a[:, 0], a[:, 1], a[:, 2], b[:, 2])
        ea = _edge_crosses_np(V, D, a[:, 1], a[:, 2], b, s1, s2)
        eb = _edge_crosses_np(V, D, b[:, 1], b[:, 2], a, r1, r2)
        c = np.where((ea < 0) | (eb < 0), UNSURE, np.where(ea + eb == 0, NO_HIT, np.where(ea + eb == 1, HIT, UNSURE)))
        codes[sh] = c
    ns = np.flatnonzero(~shared)
    if len(ns):
        a, b = A[ns], B[ns]
        sa = np.stack([orient_sos_np(V, D, b[:, 0], b[:, 1], b[:, 2], a[:, i]) for i in range(3)], axis=1)
        rej = (sa[:, 0] != 0) & (sa[:, 0] == sa[:, 1]) & (sa[:, 1] == sa[:, 2])
        keep = np.flatnonzero(~rej)
        a, b, sa, ns = a[keep], b[keep], sa[keep], ns[keep]
        sb = np.stack([orient_sos_np(V, D, a[:, 0], a[:, 1], a[:, 2], b[:, i]) for i in range(3)], axis=1)
        rej = (sb[:, 0] != 0) & (sb[:, 0] == sb[:, 1]) & (sb[:, 1] == sb[:, 2])
        keep = np.flatnonzero(~rej)
        a, b, sa, sb, ns = a[keep], b[keep], sa[keep], sb[keep], ns[keep]
        hits = np.zeros(len(ns), dtype=np.int64)
        unsure = np.zeros(len(ns), dtype=bool)
        for i in range(3):
            j = (i + 1) % 3
            r = _edge_crosses_np(V, D, a[:, i], a[:, j], b, sa[:, i], sa[:, j])
            unsure |= r < 0
            hits += np.maximum(r, 0)
            r = _edge_crosses_np(V, D, b[:, i], b[:, j], a, sb[:, i], sb[:, j])
            unsure |= r < 0
            hits += np.maximum(r, 0)
        c = np.where(unsure | ((hits != 0) & (hits != 2)), UNSURE, np.where(hits == 2, HIT, NO_HIT))
        codes[ns] = c
    return codes


def classify_pairs(V, D, A, B, shared):
    if len(A) == 0:
        return np.zeros(0, dtype=np.int8)
    args = (np.ascontiguousarray(V), np.ascontiguousarray(D), np.ascontiguousarray(A, dtype=np.int64),
            np.ascontiguousarray(B, dtype=np.int64), np.ascontiguousarray(shared, dtype=np.bool_))
    return classify_pairs_nb(*args) if use_numba() else classify_pairs_np(*args)


# ---------------------------------------------------------------------------
# BVH self query


@njit(**JIT_OPTS)
def bvh_self_pairs_nb(lo, hi, left, right, start, count, order, flo, fhi):
    n = flo.shape[0]
    cap = max(16, 8 * n)
    out = np.empty((cap, 2), dtype=np.int64)
    m = 0
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if (lo[node, 0] > fhi[i, 0] or hi[node, 0] < flo[i, 0]
                    or lo[node, 1] > fhi[i, 1] or hi[node, 1] < flo[i, 1]
                    or lo[node, 2] > fhi[i, 2] or hi[node, 2] < flo[i, 2]):
                continue
            if left[node] < 0:
                for s in range(start[node], start[node] + count[node]):
                    j = order[s]
                    if j <= i:
                        continue
                    if (flo[j, 0] > fhi[i, 0] or fhi[j, 0] < flo[i, 0]
                            or flo[j, 1] > fhi[i, 1] or fhi[j, 1] < flo[i, 1]
                            or flo[j, 2] > fhi[i, 2] or fhi[j, 2] < flo[i, 2]):
                        continue
                    if m == out.shape[0]:
                        grown = np.empty((2 * m, 2), dtype=np.int64)
                        grown[:m] = out
                        out = grown
                    out[m, 0] = i
                    out[m, 1] = j
                    m += 1
            else:
                if top + 2 > stack.shape[0]:
                    grown_s = np.empty(2 * stack.shape[0], dtype=np.int64)
                    grown_s[:top] = stack[:top]
                    stack = grown_s
                stack[top] = left[node]
                stack[top + 1] = right[node]
                top += 2
    return out[:m]


def bvh_self_pairs_np(lo, hi, left, right, start, count, order, flo, fhi):
    """Level-synchronous traversal: all (query, node) pairs advance together."""
    n = len(flo)
    q = np.arange(n, dtype=np.int64)
    nodes = np.zeros(n, dtype=np.int64)
    found = []
    while len(q):
        ok = np.all((lo[nodes] <= fhi[q]) & (hi[nodes] >= flo[q]), axis=1)
        q, nodes = q[ok], nodes[ok]
        leaf = left[nodes] < 0
        lq, ln = q[leaf], nodes[leaf]
        if len(lq):
            reps = count[ln]
            qq = np.repeat(lq, reps)
            offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
            jj = order[np.repeat(start[ln], reps) + offs]
            keep = jj > qq
            qq, jj = qq[keep], jj[keep]
            ok = np.all((flo[jj] <= fhi[qq]) & (fhi[jj] >= flo[qq]), axis=1)
            found.append(np.stack([qq[ok], jj[ok]], axis=1))
        iq, inn = q[~leaf], nodes[~leaf]
        q = np.concatenate([iq, iq])
        nodes = np.concatenate([left[inn], right[inn]])
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(found)


def bvh_self_pairs(*arrays):
    fn = bvh_self_pairs_nb if use_numba() else bvh_self_pairs_np
    pairs = fn(*arrays)
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs


# ---------------------------------------------------------------------------
# uniform grid fixed-radius pairs


def _grid_keys(X, cell):
    lo = X.min(axis=0)
    c = np.floor((X - lo) / cell).astype(np.int64)
    dims = c.max(axis=0) + 3
    key = ((c[:, 0] + 1) * dims[1] + (c[:, 1] + 1)) * dims[2] + (c[:, 2] + 1)
    return c + 1, dims, key


@njit(**JIT_OPTS)
def grid_pairs_nb(X, r2, cells, dims, skeys, sorder):
    n = X.shape[0]
    cap = max(16, 16 * n)
    out = np.empty((cap, 2), dtype=np.int64)
    m = 0
    for i in range(n):
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    key = ((cells[i, 0] + dx) * dims[1] + (cells[i, 1] + dy)) * dims[2] + (cells[i, 2] + dz)
                    s = np.searchsorted(skeys, key)
                    while s < skeys.shape[0] and skeys[s] == key:
                        j = sorder[s]
                        s += 1
                        if j <= i:
                            continue
                        ddx = X[i, 0] - X[j, 0]
                        ddy = X[i, 1] - X[j, 1]
                        ddz = X[i, 2] - X[j, 2]
                        if ddx * ddx + ddy * ddy + ddz * ddz < r2:
                            if m == out.shape[0]:
                                grown = np.empty((2 * m, 2), dtype=np.int64)
                                grown[:m] = out
                                out = grown
                            out[m, 0] = i
                            out[m, 1] = j
                            m += 1
    return out[:m]


def grid_pairs_np(X, r2, cells, dims, skeys, sorder):
    found = []
    n = len(X)
    idx = np.arange(n)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                key = ((cells[:, 0] + dx) * dims[1] + (cells[:, 1] + dy)) * dims[2] + (cells[:, 2] + dz)
                s = np.searchsorted(skeys, key, side="left")
                e = np.searchsorted(skeys, key, side="right")
                reps = e - s
                if reps.sum() == 0:
                    continue
                ii = np.repeat(idx, reps)
                offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
                jj = sorder[np.repeat(s, reps) + offs]
                keep = jj > ii
                ii, jj = ii[keep], jj[keep]
                d = X[ii] - X[jj]
                close = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2] < r2
                found.append(np.stack([ii[close], jj[close]], axis=1))
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(found)


def grid_pairs(X, radius):
    """All ``i < j`` with squared distance below ``radius**2``, sorted."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if len(X) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    extent = float(np.ptp(X, axis=0).max())
    # cells never smaller than needed to keep the key in int64
    cell = max(float(radius), extent / 2.0**19)
    cells, dims, key = _grid_keys(X, cell)
    sorder = np.argsort(key, kind="stable")
    skeys = key[sorder]
    fn = grid_pairs_nb if use_numba() else grid_pairs_np
    pairs = fn(X, float(radius) ** 2, cells, dims, skeys, sorder.astype(np.int64))
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs


# ---------------------------------------------------------------------------
# lockstep two-sided flood fill


@njit(**JIT_OPTS)
def lockstep_fill_nb(adj, blocked, seed_a, seed_b):
    """Grow two BFS fronts one face at a time, alternating, across unblocked edges.

    Returns (labels, count_a, count_b, first_done, leaked) where labels are
    1/2 for faces reached from seed a/b and first_done is the side whose
    queue emptied first (0 when the fronts met).
    """
    m = adj.shape[0]
    labels = np.zeros(m, dtype=np.int8)
    qa = np.empty(m, dtype=np.int64)
    qb = np.empty(m, dtype=np.int64)
    ha = 0
    ta = 0
    hb = 0
    tb = 0
    qa[ta] = seed_a
    ta += 1
    labels[seed_a] = 1
    if labels[seed_b] != 0:
        return labels, 1, 0, 0, True
    qb[tb] = seed_b
    tb += 1
    labels[seed_b] = 2
    done = 0
    while True:
        for side in range(2):
            if side == 0:
                if ha == ta:
                    done = 1
                    break
                f = qa[ha]
                ha += 1
            else:
                if hb == tb:
                    done = 2
                    break
                f = qb[hb]
                hb += 1
            mine = side + 1
            for k in range(3):
                g = adj[f, k]
                if g < 0 or blocked[f, k]:
                    continue
                if labels[g] == 0:
                    labels[g] = mine
                    if side == 0:
                        qa[ta] = g
                        ta += 1
                    else:
                        qb[tb] = g
                        tb += 1
                elif labels[g] != mine:
                    return labels, ta, tb, 0, True
        if done:
            break
    # finish the other side so both counts are exact
    while ha < ta or hb < tb:
        if ha < ta:
            f = qa[ha]
            ha += 1
            mine = 1
        else:
            f = qb[hb]
            hb += 1
            mine = 2
        for k in range(3):
            g = adj[f, k]
            if g < 0 or blocked[f, k]:
                continue
            if labels[g] == 0:
                labels[g] = mine
                if mine == 1:
                    qa[ta] = g
                    ta += 1
                else:
                    qb[tb] = g
                    tb += 1
            elif labels[g] != mine:
                return labels, ta, tb, 0, True
    return labels, ta, tb, done, False


def lockstep_fill_np(adj, blocked, seed_a, seed_b):
    m = len(adj)
    labels = np.zeros(m, dtype=np.int8)
    labels[seed_a] = 1
    if labels[seed_b]:
        return labels, 1, 0, 0, True
    labels[seed_b] = 2
    queues = (deque([seed_a]), deque([seed_b]))
    counts = [1, 1]
    done = 0

    def expand(side):
        f = queues[side].popleft()
        mine = side + 1
        for k in range(3):
            g = adj[f, k]
            if g < 0 or blocked[f, k]:
                continue
            if labels[g] == 0:
                labels[g] = mine
                queues[side].append(g)
                counts[side] += 1
            elif labels[g] != mine:
                return True
        return False

    while not done:
        for side in (0, 1):
            if not queues[side]:
                done = side + 1
                break
            if expand(side):
                return labels, counts[0], counts[1], 0, True
    while queues[0] or queues[1]:
        if expand(0 if queues[0] else 1):
            return labels, counts[0], counts[1], 0, True
    return labels, counts[0], counts[1], done, False


def lockstep_fill(adj, blocked, seed_a, seed_b):
    fn = lockstep_fill_nb if use_numba() else lockstep_fill_np
    labels, na, nb, done, leaked = fn(np.ascontiguousarray(adj, dtype=np.int64),
                                      np.ascontiguousarray(blocked, dtype=np.bool_), int(seed_a), int(seed_b))
    return labels, int(na), int(nb), int(done), bool(leaked)
