"""Exact nearest-neighbour queries and k% neighbourhood lists.

Candidates come from a kd-tree; the final ranking is always recomputed with
:func:`point_distances` and ordered by ``(distance, index)`` so results do not
depend on how the tree happens to break ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud, as_points

LN_100 = math.log(100.0)
BRUTE_FORCE_BELOW = 32
# relative slack used to decide whether a kd-tree candidate list may have cut a tie
_TIE_SLACK = 1e-9


def point_distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Canonical Euclidean distances from ``q`` to every row of ``points``."""
    return _norm_rows(points - q)


def _norm_rows(d: np.ndarray) -> np.ndarray:
    # fixed (x^2 + y^2) + z^2 order so every code path rounds identically
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])


@dataclass(frozen=True)
class NeighborList:
    center_index: int
    neighbor_indices: np.ndarray
    distances: np.ndarray
    sigma: float


class SpatialIndex:
    """Immutable exact nearest-neighbour index over a snapshot of a cloud."""

    def __init__(self, points):
        pts = as_points(points).copy()
        if len(pts) == 0:
            raise ValueError("cannot index an empty cloud")
        pts.setflags(write=False)
        self.points = pts
        self._tree = None if len(pts) < BRUTE_FORCE_BELOW else cKDTree(pts)

    def __len__(self):
        return len(self.points)

    def knn(self, queries, k: int, exclude: np.ndarray | None = None):
        """The ``k`` nearest indexed points for each query row.

        ``exclude[i]`` (if given) is an index that query ``i`` must skip,
        used to drop the centre point from its own neighbourhood.
        Returns ``(indices, distances)`` of shape ``(m, k)``, ordered by
        ascending distance with ties going to the smaller index.
        """
        Qp = as_points(queries)
        n = len(self.points)
        avail = n - (1 if exclude is not None else 0)
        if not 1 <= k <= avail:
            raise ValueError(f"cannot return {k} neighbours from {avail} candidates")
        m = len(Qp)
        out_i = np.empty((m, k), dtype=np.intp)
        out_d = np.empty((m, k))
        if self._tree is None or k + 8 >= n:
            for r in range(m):
                out_i[r], out_d[r] = self._rank_all(Qp[r], k, None if exclude is None else exclude[r])
            return out_i, out_d

        kq = k + 1 + 4
        tree_d, cand = self._tree.query(Qp, k=kq)
        diff = self.points[cand] - Qp[:, None, :]
        d = _norm_rows(diff)
        if exclude is not None:
            d[cand == np.asarray(exclude)[:, None]] = np.inf
        rows = np.repeat(np.arange(m), kq)
        order = np.lexsort((cand.ravel(), d.ravel(), rows)).reshape(m, kq)[:, :k]
        out_i[:] = cand.ravel()[order]
        out_d[:] = d.ravel()[order]
        # every point strictly inside tree_d[:, -1] is among the candidates;
        # rows whose k-th distance reaches that radius may have lost a tie
        unsafe = out_d[:, -1] * (1 + _TIE_SLACK) >= tree_d[:, -1] * (1 - _TIE_SLACK)
        for r in np.flatnonzero(unsafe):
            out_i[r], out_d[r] = self._rank_all(Qp[r], k, None if exclude is None else exclude[r])
        return out_i, out_d

    def _rank_all(self, q, k, skip):
        d = point_distances(self.points, q)
        idx = np.arange(len(self.points))
        if skip is not None:
            keep = idx != skip
            d, idx = d[keep], idx[keep]
        order = np.lexsort((idx, d))[:k]
        return idx[order], d[order]

    def nearest_many(self, queries):
        i, d = self.knn(queries, 1)
        return i[:, 0], d[:, 0]

    def nearest(self, q):
        i, d = self.knn(np.asarray(q, dtype=np.float64).reshape(1, 3), 1)
        return int(i[0, 0]), float(d[0, 0])


def build_index(cloud) -> SpatialIndex:
    pts = cloud.points if isinstance(cloud, PointCloud) else cloud
    return SpatialIndex(pts)


def nearest(index: SpatialIndex, q) -> tuple[int, float]:
    """Index and distance of the closest stored point (smallest index on ties)."""
    return index.nearest(q)


def neighbor_count(n: int, k_percent: float) -> int:
    if not 0 < k_percent <= 100:
        raise ValueError("k_percent must lie in (0, 100]")
    count = math.ceil(k_percent / 100.0 * (n - 1) - 1e-9)
    if count < 1:
        raise ValueError(f"k={k_percent}% of {n - 1} candidates yields no neighbours")
    return count


def sigma_from_farthest(d_far: float) -> float:
    """Gaussian scale giving the farthest neighbour an influence of exactly 0.01."""
    return math.sqrt(d_far * d_far / LN_100)


def neighborhoods(cloud, k_percent: float, index: SpatialIndex | None = None) -> list[NeighborList]:
    """k% nearest other points of every point plus its Gaussian scale sigma."""
    pts = cloud.points if isinstance(cloud, PointCloud) else as_points(cloud)
    n = len(pts)
    if n < 2:
        raise ValueError("neighbourhoods need at least two points")
    k = neighbor_count(n, k_percent)
    index = index or SpatialIndex(pts)
    idx, dist = index.knn(pts, k, exclude=np.arange(n))
    out = []
    for i in range(n):
        far = dist[i, -1]
        if far <= 0.0:
            raise ValueError(f"point {i} coincides with all of its neighbours")
        out.append(NeighborList(i, idx[i], dist[i], sigma_from_farthest(far)))
    return out
