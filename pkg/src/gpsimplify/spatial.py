"""Exact spatial queries over a point cloud, plus farthest point sampling.

The index is a thin wrapper around ``scipy.spatial.cKDTree``; all queries are
exact in the Euclidean metric and return indices into the cloud's original
point ordering. kNN distance ties are broken by lower point index so results
are a total order and reproducible.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.spatial import cKDTree

from .cloud_io import PointCloud
from .errors import EmptyCloud, KOutOfRange, NonPositiveRadius


def worker_count() -> int:
    """Thread count for parallel queries, from GPSIMPLIFY_THREADS (default: all)."""
    value = os.environ.get("GPSIMPLIFY_THREADS", "").strip()
    if value:
        try:
            n = int(value)
            if n >= 1:
                return n
        except ValueError:
            pass
    return -1  # scipy convention: use all available cores


class SpatialIndex:
    """Balanced KD-tree over an immutable cloud, safe for concurrent reads."""

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        self.cloud = cloud
        self._tree = cKDTree(cloud.points)

    def __len__(self):
        return len(self.cloud)

    def radius_query(self, center, r: float) -> np.ndarray:
        """All indices within Euclidean distance <= r of center, ascending."""
        if not r > 0:
            raise NonPositiveRadius(f"radius must be positive, got {r}")
        idx = self._tree.query_ball_point(np.asarray(center, dtype=np.float64), r)
        return np.sort(np.asarray(idx, dtype=np.intp))

    def radius_query_all(self, r: float, workers: int | None = None) -> list:
        """Radius neighborhoods of every cloud point (unsorted index lists)."""
        if not r > 0:
            raise NonPositiveRadius(f"radius must be positive, got {r}")
        return self._tree.query_ball_point(
            self.cloud.points, r,
            workers=workers if workers is not None else worker_count(),
            return_sorted=False,
        )

    def knn_query(self, center, k: int) -> np.ndarray:
        """The k nearest indices, ascending by distance, ties by lower index."""
        n = len(self)
        if not 1 <= k <= n:
            raise KOutOfRange(f"k={k} outside [1, {n}]")
        center = np.asarray(center, dtype=np.float64)
        d, _ = self._tree.query(center, k=k)
        dmax = float(np.max(d)) if k > 1 else float(d)
        # inflate the cutoff a few ulps so boundary ties are never dropped,
        # then impose the (distance, index) total order ourselves
        cutoff = np.nextafter(np.nextafter(dmax, np.inf), np.inf)
        cand = np.asarray(
            self._tree.query_ball_point(center, cutoff), dtype=np.intp
        )
        d2 = np.sum((self.cloud.points[cand] - center) ** 2, axis=1)
        order = np.lexsort((cand, d2))
        return cand[order[:k]]


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def farthest_point_sample(cloud: PointCloud, k: int, seed=0) -> np.ndarray:
    """Greedy max-min coverage sample of k distinct point indices.

    The first point is the one farthest from the centroid; each later point
    maximizes its minimum distance to the points already chosen. The seed
    only breaks exact distance ties for the first pick, so output is fully
    deterministic for a given (cloud, k, seed).
    """
    n = len(cloud)
    if not 1 <= k <= n:
        raise KOutOfRange(f"k={k} outside [1, {n}]")
    pts = cloud.points
    d2 = np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)
    ties = np.flatnonzero(d2 == d2.max())
    if len(ties) > 1:
        first = int(ties[np.random.default_rng(seed).integers(len(ties))])
    else:
        first = int(ties[0])

    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = first
    mind2 = np.sum((pts - pts[first]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(mind2))  # argmax takes the lowest index on ties
        chosen[i] = nxt
        np.minimum(mind2, np.sum((pts - pts[nxt]) ** 2, axis=1), out=mind2)
    return chosen
