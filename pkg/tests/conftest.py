"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's fast paths: dense
textbook GP formulas with explicit inverses, brute-force O(N^2) neighbor
scans, and elementwise kernel loops. Tests compare the production code
against these.
"""

import math

import numpy as np
import pytest

from gpsimplify.gp import JITTER_SCALE
from gpsimplify.kernels import (
    EUCLIDEAN,
    MANIFOLD,
    KernelSpec,
    build_graph_laplacian,
    kernel_matrix,
    laplacian_eigenpairs,
)


# --- brute-force spatial oracles -------------------------------------------


def brute_radius(points, center, r):
    d2 = np.sum((points - np.asarray(center)) ** 2, axis=1)
    return np.flatnonzero(d2 <= r * r)


def brute_knn(points, center, k):
    d2 = np.sum((points - np.asarray(center)) ** 2, axis=1)
    order = np.lexsort((np.arange(len(points)), d2))
    return order[:k]


def brute_hausdorff(a, b):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return d.min(axis=1)


# --- dense textbook GP oracle ----------------------------------------------


def dense_posterior(spec, x, y, noise, queries, basis=None, jitter=None):
    """Posterior mean/cov by explicit matrix inversion (no Cholesky)."""
    if jitter is None:
        jitter = JITTER_SCALE * spec.variance
    kmat = kernel_matrix(spec, x, basis=basis)
    khat = kmat + (noise + jitter) * np.eye(len(y))
    kinv = np.linalg.inv(khat)
    kstar = kernel_matrix(spec, queries, x, basis=basis)
    kss = kernel_matrix(spec, queries, basis=basis)
    mean = kstar @ kinv @ np.asarray(y, dtype=np.float64)
    cov = kss - kstar @ kinv @ kstar.T
    return mean, np.diag(cov).copy(), cov


def dense_lml(spec, x, y, noise, basis=None, jitter=None):
    """Log marginal likelihood by explicit inverse and slogdet."""
    if jitter is None:
        jitter = JITTER_SCALE * spec.variance
    y = np.asarray(y, dtype=np.float64)
    kmat = kernel_matrix(spec, x, basis=basis)
    khat = kmat + (noise + jitter) * np.eye(len(y))
    _, logdet = np.linalg.slogdet(khat)
    return float(
        -0.5 * y @ np.linalg.inv(khat) @ y
        - 0.5 * logdet
        - 0.5 * len(y) * math.log(2 * math.pi)
    )


# --- random problem generators ----------------------------------------------


def random_euclidean_problem(rng, m, q):
    spec = KernelSpec(
        family=EUCLIDEAN,
        variance=float(rng.uniform(0.5, 2.0)),
        lengthscale=float(rng.uniform(0.2, 1.0)),
        nu=float(rng.choice([0.5, 1.5, 2.5])),
    )
    x = rng.random((m, 3))
    queries = rng.random((q, 3))
    y = rng.normal(size=m)
    noise = float(10 ** rng.uniform(-3, -1))
    return spec, x, y, noise, queries, None


def random_manifold_problem(rng, m, q, nodes=60, eigenpairs=None):
    pts = rng.random((nodes, 3))
    lap = build_graph_laplacian(pts, k_graph=6)
    count = eigenpairs if eigenpairs is not None else int(rng.integers(10, nodes))
    basis = laplacian_eigenpairs(lap, count)
    spec = KernelSpec(
        family=MANIFOLD,
        variance=float(rng.uniform(0.5, 2.0)),
        lengthscale=float(rng.uniform(0.3, 2.0)),
        nu=float(rng.choice([0.5, 1.5, 2.5])),
        eigenpair_count=count,
        graph_neighbors=6,
    )
    ids = rng.permutation(nodes)
    x = ids[:m]
    queries = ids[m : m + q]
    y = rng.normal(size=m)
    noise = float(10 ** rng.uniform(-3, -1))
    return spec, x, y, noise, queries, basis


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
