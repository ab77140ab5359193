"""Axis-aligned bounding-box hierarchy over mesh faces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import TriMesh

LEAF_SIZE = 4


@dataclass(frozen=True, eq=False)
class BVH:
    """Flat node arrays; node 0 is the root and leaves have ``left == -1``.

    Leaf ``k`` owns ``order[start[k] : start[k] + count[k]]``.
    """

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    face_lo: np.ndarray
    face_hi: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def query(self, box_lo, box_hi) -> np.ndarray:
        """Sorted faces whose boxes overlap the closed box [box_lo, box_hi]."""
        box_lo = np.asarray(box_lo, dtype=np.float64)
        box_hi = np.asarray(box_hi, dtype=np.float64)
        out = []
        stack = [0]
        while stack:
            k = stack.pop()
            if np.any(self.lo[k] > box_hi) or np.any(self.hi[k] < box_lo):
                continue
            if self.left[k] < 0:
                cand = self.order[self.start[k] : self.start[k] + self.count[k]]
                ok = np.all((self.face_lo[cand] <= box_hi) & (self.face_hi[cand] >= box_lo), axis=1)
                out.extend(cand[ok].tolist())
            else:
                stack.extend((int(self.left[k]), int(self.right[k])))
        return np.array(sorted(out), dtype=np.int64)

    def self_pairs(self) -> np.ndarray:
        """All face pairs ``i < j`` with overlapping boxes, lexicographically sorted."""
        return kernels.bvh_self_pairs(self.lo, self.hi, self.left, self.right, self.start,
                                      self.count, self.order, self.face_lo, self.face_hi)


def face_boxes(vertices: np.ndarray, faces: np.ndarray, pad: float = 0.0):
    tri = vertices[faces]
    return tri.min(axis=1) - pad, tri.max(axis=1) + pad


def build_bvh(mesh: TriMesh, vertices: np.ndarray | None = None, pad: float = 0.0) -> BVH:
    """Median-split hierarchy on face centroids along the widest axis.

    ``pad`` inflates every face box; zero keeps boxes tight, so touching
    faces still overlap (closed intervals).
    """
    v = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    if mesh.n_faces == 0:
        raise ValueError("cannot build a BVH over an empty mesh")
    flo, fhi = face_boxes(v, mesh.faces, pad)
    cen = 0.5 * (flo + fhi)
    order = np.arange(mesh.n_faces, dtype=np.int64)
    lo, hi, left, right, start, count = [], [], [], [], [], []

    # iterative build; children are appended after their parent
    todo = [(0, mesh.n_faces, -1, 0)]
    while todo:
        s, e, parent, side = todo.pop()
        k = len(left)
        idx = order[s:e]
        lo.append(flo[idx].min(axis=0))
        hi.append(fhi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        if parent >= 0:
            (left if side == 0 else right)[parent] = k
        if e - s <= LEAF_SIZE:
            continue
        c = cen[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (e - s) // 2
        part = np.argpartition(c[:, axis], mid, kind="introselect")
        order[s:e] = idx[part]
        count[k] = 0
        todo.append((s + mid, e, k, 1))
        todo.append((s, s + mid, k, 0))

    return BVH(
        lo=np.array(lo), hi=np.array(hi),
        left=np.array(left, dtype=np.int64), right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64), count=np.array(count, dtype=np.int64),
        order=order, face_lo=flo, face_hi=fhi,
    )
