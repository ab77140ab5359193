"""Numba kernels against their numpy fallbacks on the demo fixtures.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are called directly, so one process times both; the numba
column is empty when numba is missing or SELFCOL_NO_NUMBA is set.
"""

import argparse
import time

import numpy as np

from selfcol import fixtures, kernels
from selfcol._accel import HAVE_NUMBA
from selfcol.bvh import build_bvh
from selfcol.pipeline import SelfCollisionPipeline
from selfcol.predicates import directions_for
from selfcol.selfx import candidate_pairs


def best_of(fn, repeat):
    fn()  # warm up (and compile)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    torus = fixtures.pinched_torus()
    V = torus.vertices
    D = directions_for(len(V))
    _, A, B, shared = candidate_pairs(torus, V)
    yield "classify_pairs torus", kernels.classify_pairs_nb, kernels.classify_pairs_np, (V, D, A, B, shared)

    bvh = build_bvh(torus)
    args = (bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order, bvh.face_lo, bvh.face_hi)
    yield "bvh_self_pairs torus", kernels.bvh_self_pairs_nb, kernels.bvh_self_pairs_np, args

    x = np.random.default_rng(0).uniform(0, 0.5, (20000, 3))
    r = 0.02
    cells, dims, key = kernels._grid_keys(x, r)
    order = np.argsort(key, kind="stable")
    args = (x, r * r, cells, dims, key[order], order.astype(np.int64))
    yield "grid_pairs 20k points", kernels.grid_pairs_nb, kernels.grid_pairs_np, args

    m = fixtures.grid_sheet(120, 120)
    adj = m.face_adjacency
    # a cut down the middle, so both fronts fill their halves completely
    left = m.vertices[m.faces].mean(axis=1)[:, 0] < 0.5
    ok = adj >= 0
    blocked = np.zeros_like(adj, dtype=bool)
    blocked[ok] = left[np.nonzero(ok)[0]] != left[adj[ok]]
    args = (adj, blocked, 0, m.n_faces - 1)
    yield "lockstep_fill 28.8k faces", kernels.lockstep_fill_nb, kernels.lockstep_fill_np, args


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"numba available: {HAVE_NUMBA}")
    print(f"{'kernel':28s} {'numba (ms)':>12s} {'numpy (ms)':>12s} {'speedup':>9s}")
    for name, nb, np_, a in cases():
        t_np = best_of(lambda: np_(*a), args.repeat)
        if HAVE_NUMBA:
            t_nb = best_of(lambda: nb(*a), args.repeat)
            print(f"{name:28s} {1e3 * t_nb:12.2f} {1e3 * t_np:12.2f} {t_np / t_nb:8.1f}x")
        else:
            print(f"{name:28s} {'-':>12s} {1e3 * t_np:12.2f} {'-':>9s}")
    pipe = SelfCollisionPipeline(fixtures.pinched_torus())
    t = best_of(pipe.analyze, args.repeat)
    print(f"\nfull analysis, 2048-face torus: {1e3 * t:.1f} ms")


if __name__ == "__main__":
    main()
