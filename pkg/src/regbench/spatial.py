"""Exact nearest-neighbour and fixed-radius queries over a point cloud."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, NonPositiveThreshold


class KdIndex:
    """Balanced kd-tree over an immutable snapshot of a cloud's points.

    Nearest-neighbour ties are resolved towards the lowest point id, so two
    indexes built on identical clouds always give identical answers.
    """

    def __init__(self, points, leafsize=16):
        pts = np.array(getattr(points, "points", points), dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        pts.setflags(write=False)
        self.points = pts
        self.leafsize = leafsize
        self._tree = cKDTree(pts, leafsize=leafsize, balanced_tree=True, compact_nodes=True)

    def __len__(self):
        return len(self.points)

    def nearest(self, q):
        ids, dists = self.nearest_many(np.asarray(q, dtype=np.float64).reshape(1, 3))
        return int(ids[0]), float(dists[0])

    def nearest_many(self, queries, workers=1):
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if len(q) == 0:
            return np.empty(0, dtype=np.intp), np.empty(0)
        if len(self.points) == 1:
            d = np.linalg.norm(q - self.points[0], axis=1)
            return np.zeros(len(q), dtype=np.intp), d
        d, i = self._tree.query(q, k=2, workers=workers)
        ids = i[:, 0].copy()
        dists = d[:, 0].copy()
        tied = np.flatnonzero(d[:, 1] <= d[:, 0])
        for row in tied:
            ids[row], dists[row] = self._resolve_tie(q[row], d[row, 0])
        return ids, dists

    def _resolve_tie(self, q, dist):
        cand = np.asarray(self._tree.query_ball_point(q, dist * (1 + 1e-9) + 1e-300))
        cd = np.sqrt(((self.points[cand] - q) ** 2).sum(axis=1))
        best = cd.min()
        winner = cand[cd == best].min()
        return winner, float(np.sqrt(((self.points[winner] - q) ** 2).sum()))

    def has_within(self, q, r):
        """True iff some indexed point lies strictly closer than ``r``."""
        return bool(self.has_within_many(np.asarray(q).reshape(1, 3), r)[0])

    def has_within_many(self, queries, r, workers=1):
        if not r > 0:
            raise NonPositiveThreshold(f"radius must be positive, got {r}")
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        # the tree compares squared distances; a tiny r would underflow
        bound = r * (1 + 1e-9) if r * r > 0 else np.inf
        d, _ = self._tree.query(q, k=1, distance_upper_bound=bound, workers=workers)
        return d < r


def build(cloud, leafsize=16):
    return KdIndex(cloud, leafsize=leafsize)


def index_of(cloud):
    """Kd-tree for ``cloud``, built once and cached on the cloud."""
    return cloud.cached("kdindex", lambda: KdIndex(cloud))
