"""Per-point local PCA: neighborhood radius estimation, covariance
eigen-analysis, surface variation, and normal estimation.

Surface variation of a point is lam0 / (lam0 + lam1 + lam2), the share of
local variance along the least-spread principal direction of its
neighborhood. It lives in [0, 1/3]: 0 on a perfect plane, 1/3 for a fully
isotropic neighborhood, and is a practical proxy for curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cloud_io import PointCloud, bounding_box
from .errors import CoincidentPoints, InvalidCloud
from .spatial import SpatialIndex, worker_count


@dataclass(frozen=True)
class NeighborhoodParams:
    """Neighborhood scale: target neighbor count and (optional) fixed radius.

    When ``radius`` is None it is estimated from point density, assuming each
    point covers an equal share of the bounding-box surface area:
    r = sqrt(k * s / pi) with s = V^(2/3) / N.
    """

    k: int = 25
    radius: float | None = None
    min_neighbors: int = 4

    def __post_init__(self):
        if self.k < 4:
            raise InvalidCloud(f"neighbor count k must be >= 4, got {self.k}")
        if self.min_neighbors < 4:
            raise InvalidCloud("min_neighbors must be >= 4")
        if self.radius is not None and not self.radius > 0:
            raise InvalidCloud(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class LocalFrame:
    """Eigen-structure of one neighborhood covariance.

    ``eigenvalues`` ascending and clamped at 0; ``eigenvectors`` orthonormal
    columns matching them; column 0 estimates the surface normal.
    """

    eigenvalues: np.ndarray   # (3,)
    eigenvectors: np.ndarray  # (3, 3), columns v0, v1, v2
    centroid: np.ndarray      # (3,)


@dataclass(frozen=True)
class VariationField:
    """Surface variation per point, with the neighborhood params actually used."""

    values: np.ndarray
    params: NeighborhoodParams

    def __len__(self):
        return len(self.values)

    def to_csv(self) -> str:
        lines = ["index,sigma_n"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.values)]
        return "\n".join(lines) + "\n"


def estimate_radius(cloud: PointCloud, k: int = 25) -> float:
    """Neighborhood radius from bounding-box area-per-point (see params doc).

    Degenerate boxes (V = 0, e.g. planar clouds) fall back to r = d*k/N with
    d the box diagonal; a fully coincident cloud has no scale and raises.
    """
    n = len(cloud)
    if n < 4:
        raise InvalidCloud(f"radius estimation needs >= 4 points, got {n}")
    if k < 4:
        raise InvalidCloud(f"neighbor count k must be >= 4, got {k}")
    box = bounding_box(cloud)
    if box.volume > 0:
        area_per_point = box.volume ** (2.0 / 3.0) / n
        return math.sqrt(k * area_per_point / math.pi)
    if box.diagonal > 0:
        return box.diagonal * k / n
    raise CoincidentPoints("all points coincide; no radius can be estimated")


def _frames_from_neighborhoods(points, neighborhoods):
    """Batched covariance eigen-decomposition over ragged neighborhoods.

    Returns (eigenvalues (N,3) ascending, eigenvectors (N,3,3), centroids
    (N,3)). Covariances are centered per neighborhood and normalized by the
    neighbor count; round-off negatives are clamped to 0.
    """
    counts = np.array([len(nb) for nb in neighborhoods], dtype=np.intp)
    flat = np.concatenate([np.asarray(nb, dtype=np.intp) for nb in neighborhoods])
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    coords = points[flat]

    sums = np.add.reduceat(coords, offsets, axis=0)
    centroids = sums / counts[:, None]
    centered = coords - np.repeat(centroids, counts, axis=0)

    # six unique entries of the symmetric 3x3 second-moment matrix
    prods = np.empty((len(flat), 6))
    prods[:, 0] = centered[:, 0] * centered[:, 0]
    prods[:, 1] = centered[:, 1] * centered[:, 1]
    prods[:, 2] = centered[:, 2] * centered[:, 2]
    prods[:, 3] = centered[:, 0] * centered[:, 1]
    prods[:, 4] = centered[:, 0] * centered[:, 2]
    prods[:, 5] = centered[:, 1] * centered[:, 2]
    m = np.add.reduceat(prods, offsets, axis=0) / counts[:, None]

    cov = np.empty((len(counts), 3, 3))
    cov[:, 0, 0] = m[:, 0]
    cov[:, 1, 1] = m[:, 1]
    cov[:, 2, 2] = m[:, 2]
    cov[:, 0, 1] = cov[:, 1, 0] = m[:, 3]
    cov[:, 0, 2] = cov[:, 2, 0] = m[:, 4]
    cov[:, 1, 2] = cov[:, 2, 1] = m[:, 5]

    eigvals, eigvecs = np.linalg.eigh(cov)
    np.maximum(eigvals, 0.0, out=eigvals)
    return eigvals, eigvecs, centroids


def _neighborhoods(cloud, index, params, workers=None):
    """Radius neighborhoods with a kNN fallback for under-populated balls."""
    r = params.radius if params.radius is not None else estimate_radius(cloud, params.k)
    neighborhoods = index.radius_query_all(r, workers=workers)
    short = [i for i, nb in enumerate(neighborhoods) if len(nb) < params.min_neighbors]
    if short:
        k = min(params.min_neighbors, len(cloud))
        _, knn = index._tree.query(cloud.points[short], k=k)
        knn = np.atleast_2d(knn)
        for row, i in enumerate(short):
            neighborhoods[i] = knn[row]
    return neighborhoods, r


def local_frame(cloud: PointCloud, index: SpatialIndex, i: int,
                params: NeighborhoodParams = NeighborhoodParams()) -> LocalFrame:
    """Covariance eigen-frame of point i's neighborhood."""
    r = params.radius if params.radius is not None else estimate_radius(cloud, params.k)
    nb = index.radius_query(cloud.points[i], r)
    if len(nb) < params.min_neighbors:
        nb = index.knn_query(cloud.points[i], min(params.min_neighbors, len(cloud)))
    w, v, c = _frames_from_neighborhoods(cloud.points, [nb])
    return LocalFrame(w[0], v[0], c[0])


def estimate_normal(frame: LocalFrame) -> np.ndarray:
    """Unit normal estimate: the least-variance eigenvector (sign arbitrary)."""
    return frame.eigenvectors[:, 0]


def surface_variation_field(
    cloud: PointCloud,
    params: NeighborhoodParams = NeighborhoodParams(),
    index: SpatialIndex | None = None,
    workers: int | None = None,
) -> VariationField:
    """Surface variation for every point of the cloud.

    The computation is a data-parallel map over points against a shared
    read-only KD-tree; output is deterministic regardless of worker count.
    """
    n = len(cloud)
    if n < 4:
        raise InvalidCloud(f"surface variation needs >= 4 points, got {n}")
    if np.all(cloud.points == cloud.points[0]):
        raise CoincidentPoints("cloud is a single repeated point")
    if index is None:
        index = SpatialIndex(cloud)
    if workers is None:
        workers = worker_count()
    neighborhoods, r = _neighborhoods(cloud, index, params, workers=workers)
    eigvals, _, _ = _frames_from_neighborhoods(cloud.points, neighborhoods)
    trace = eigvals.sum(axis=1)
    values = np.zeros(n)
    ok = trace > 0
    values[ok] = eigvals[ok, 0] / trace[ok]
    return VariationField(values, replace(params, radius=r))
