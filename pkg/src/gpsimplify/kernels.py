"""Covariance functions: Euclidean Matérn and its graph-spectral analogue.

The Euclidean family uses the half-integer closed forms (nu in {1/2, 3/2,
5/2}). The manifold family realizes a Matérn kernel on the discrete metric
of the cloud itself: eigenpairs (lam_n, f_n) of the symmetric normalized
Laplacian of a kNN graph stand in for the Laplace-Beltrami spectrum, and

    k(i, j) = (variance / C) * sum_n (2 nu / kappa^2 + lam_n)^(-nu - d/2)
              * f_n(i) * f_n(j)

with C fixed so the average prior variance over nodes equals ``variance``.
Because the sum is a Gram form, every kernel matrix drawn from it is PSD.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as sparse_linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import (
    CoincidentPoints,
    ConvergenceFailure,
    GraphTooSmall,
    NodeNotInBasis,
    UnsupportedNu,
)

EUCLIDEAN = "euclidean_matern"
MANIFOLD = "manifold_matern"

_EUCLIDEAN_NUS = (0.5, 1.5, 2.5)

# dense eigensolve below this node count; shift-invert ARPACK above
_DENSE_EIG_LIMIT = 2048


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    ``variance``, ``lengthscale``, ``nu`` are the usual Matérn parameters.
    The manifold family additionally carries the spectral-basis size
    (``eigenpair_count``), the kNN-graph degree (``graph_neighbors``) and
    the assumed manifold dimension (2 for clouds sampling a surface).
    """

    family: str = MANIFOLD
    variance: float = 1.0
    lengthscale: float = 1.0
    nu: float = 1.5
    eigenpair_count: int = 500
    graph_neighbors: int = 10
    manifold_dim: int = 2

    def __post_init__(self):
        if self.family not in (EUCLIDEAN, MANIFOLD):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (self.variance > 0 and self.lengthscale > 0 and self.nu > 0):
            raise ValueError("variance, lengthscale, nu must all be positive")
        if self.family == EUCLIDEAN and self.nu not in _EUCLIDEAN_NUS:
            raise UnsupportedNu(
                f"euclidean Matérn needs nu in {_EUCLIDEAN_NUS}, got {self.nu}"
            )
        if self.eigenpair_count < 1 or self.graph_neighbors < 3 or self.manifold_dim < 1:
            raise ValueError("eigenpair_count >= 1, graph_neighbors >= 3, dim >= 1")

    def with_params(self, **kw) -> "KernelSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class LaplacianBasis:
    """Smallest eigenpairs of a graph Laplacian over a working point set.

    ``eigenvectors[:, n]`` is f_n evaluated at every node; nodes are the
    integer positions 0..node_count-1 within the working set. Eigenvectors
    are orthonormal and sign-fixed (first nonzero entry positive).
    """

    eigenvalues: np.ndarray   # (L,), ascending, >= 0
    eigenvectors: np.ndarray  # (node_count, L)

    @property
    def node_count(self) -> int:
        return self.eigenvectors.shape[0]

    def __len__(self):
        return len(self.eigenvalues)

    def normalization(self, spec: KernelSpec) -> float:
        """The constant C making mean prior variance over nodes = variance."""
        return float(matern_weights(spec, self.eigenvalues).sum() / self.node_count)


# --- Euclidean family ----------------------------------------------------


def _matern_from_r(spec: KernelSpec, r):
    """Half-integer Matérn closed forms as a function of distance."""
    s2, kap, nu = spec.variance, spec.lengthscale, spec.nu
    r = np.asarray(r, dtype=np.float64)
    if nu == 0.5:
        return s2 * np.exp(-r / kap)
    if nu == 1.5:
        a = np.sqrt(3.0) * r / kap
        return s2 * (1.0 + a) * np.exp(-a)
    if nu == 2.5:
        a = np.sqrt(5.0) * r / kap
        return s2 * (1.0 + a + a * a / 3.0) * np.exp(-a)
    raise UnsupportedNu(f"no closed form at nu={nu}")


def _matern_dkappa_from_r(spec: KernelSpec, r):
    """d k / d kappa for the closed forms above."""
    s2, kap, nu = spec.variance, spec.lengthscale, spec.nu
    r = np.asarray(r, dtype=np.float64)
    if nu == 0.5:
        return s2 * np.exp(-r / kap) * r / kap**2
    if nu == 1.5:
        return s2 * (3.0 * r**2 / kap**3) * np.exp(-np.sqrt(3.0) * r / kap)
    if nu == 2.5:
        a = np.sqrt(5.0) * r / kap
        return s2 * (5.0 * r**2 / (3.0 * kap**3)) * (1.0 + a) * np.exp(-a)
    raise UnsupportedNu(f"no closed form at nu={nu}")


def matern_euclidean(spec: KernelSpec, x, y) -> float:
    """Kernel value between two points (or elementwise over arrays)."""
    if spec.family != EUCLIDEAN:
        raise ValueError("matern_euclidean needs a euclidean_matern spec")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = np.linalg.norm(x - y, axis=-1)
    out = _matern_from_r(spec, r)
    return float(out) if np.isscalar(r) or r.ndim == 0 else out


# --- graph Laplacian -----------------------------------------------------


def build_graph_laplacian(points, k_graph: int = 10) -> sparse.csr_matrix:
    """Symmetric normalized Laplacian of the symmetrized kNN graph.

    Edge weights are Gaussian in distance, exp(-d^2 / (2 h^2)) with h the
    mean kNN distance; L = I - D^(-1/2) W D^(-1/2) is PSD with spectrum in
    [0, 2].
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n < k_graph + 1:
        raise GraphTooSmall(f"need at least {k_graph + 1} points, got {n}")
    tree = cKDTree(points)
    dist, idx = tree.query(points, k=k_graph + 1)
    dist, idx = dist[:, 1:], idx[:, 1:]  # drop self matches
    h = float(dist.mean())
    if h <= 0:
        raise CoincidentPoints("kNN graph has zero mean edge length")
    w = np.exp(-dist**2 / (2.0 * h * h))
    # keep isolated-by-underflow nodes connected
    np.maximum(w, 1e-300, out=w)
    rows = np.repeat(np.arange(n), k_graph)
    weights = sparse.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n, n))
    weights = weights.maximum(weights.T)
    deg = np.asarray(weights.sum(axis=1)).ravel()
    inv_sqrt = sparse.diags(1.0 / np.sqrt(deg))
    lap = sparse.identity(n, format="csr") - inv_sqrt @ weights @ inv_sqrt
    return lap.tocsr()


def laplacian_eigenpairs(lap, count: int) -> LaplacianBasis:
    """The ``count`` smallest eigenpairs of a sparse symmetric Laplacian.

    Small problems are solved densely; large ones by shift-invert Lanczos
    with a fixed start vector, so repeated calls are bit-identical. Signs
    are fixed so each eigenvector's first nonzero entry is positive.
    """
    n = lap.shape[0]
    if not 1 <= count <= n:
        raise ValueError(f"count={count} outside [1, {n}]")
    if n <= _DENSE_EIG_LIMIT or count >= n - 1:
        vals, vecs = scipy.linalg.eigh(
            np.asarray(lap.todense()), subset_by_index=[0, count - 1]
        )
    else:
        rng = np.random.default_rng(0)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = sparse_linalg.eigsh(
                lap.tocsc(), k=count, sigma=-1e-2, which="LM", v0=v0
            )
        except sparse_linalg.ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            res = float("nan")
            if got:
                ev, evec = exc.eigenvalues, exc.eigenvectors
                res = float(np.linalg.norm(lap @ evec - evec * ev, axis=0).max())
            raise ConvergenceFailure(
                f"eigensolver converged {got}/{count} pairs, residual {res:.3e}"
            ) from exc
    order = np.argsort(vals, kind="stable")
    vals = np.maximum(vals[order], 0.0)
    vecs = vecs[:, order]
    for col in range(vecs.shape[1]):
        v = vecs[:, col]
        nz = np.flatnonzero(v)
        if len(nz) and v[nz[0]] < 0:
            vecs[:, col] = -v
    return LaplacianBasis(vals, vecs)


# --- manifold family ------------------------------------------------------


def matern_weights(spec: KernelSpec, eigenvalues) -> np.ndarray:
    """Spectral weights (2 nu / kappa^2 + lam_n)^(-nu - d/2)."""
    base = 2.0 * spec.nu / spec.lengthscale**2 + np.asarray(eigenvalues)
    return base ** (-spec.nu - spec.manifold_dim / 2.0)


def _dweights_dkappa(spec: KernelSpec, eigenvalues) -> np.ndarray:
    power = spec.nu + spec.manifold_dim / 2.0
    base = 2.0 * spec.nu / spec.lengthscale**2 + np.asarray(eigenvalues)
    return power * (4.0 * spec.nu / spec.lengthscale**3) * base ** (-power - 1.0)


def manifold_features(spec: KernelSpec, basis: LaplacianBasis) -> np.ndarray:
    """Feature map Psi (node_count, L) with k(i, j) = Psi[i] . Psi[j]."""
    w = matern_weights(spec, basis.eigenvalues)
    scale = spec.variance / (w.sum() / basis.node_count)
    return basis.eigenvectors * np.sqrt(scale * w)


def matern_manifold(spec: KernelSpec, basis: LaplacianBasis, i: int, j: int) -> float:
    """Kernel value between two nodes of the basis."""
    if spec.family != MANIFOLD:
        raise ValueError("matern_manifold needs a manifold_matern spec")
    n = basis.node_count
    if not (0 <= i < n and 0 <= j < n):
        raise NodeNotInBasis(f"nodes ({i}, {j}) outside basis of {n} nodes")
    w = matern_weights(spec, basis.eigenvalues)
    c = w.sum() / n
    return float(
        spec.variance / c * np.sum(w * basis.eigenvectors[i] * basis.eigenvectors[j])
    )


def _as_nodes(basis: LaplacianBasis, which) -> np.ndarray:
    idx = np.asarray(which, dtype=np.intp).ravel()
    if len(idx) and (idx.min() < 0 or idx.max() >= basis.node_count):
        raise NodeNotInBasis(
            f"node ids outside basis of {basis.node_count} nodes"
        )
    return idx


def _mirror(mat: np.ndarray) -> np.ndarray:
    lower = np.tril(mat)
    return lower + np.tril(mat, -1).T


def kernel_matrix(spec: KernelSpec, rows, cols=None,
                  basis: LaplacianBasis | None = None) -> np.ndarray:
    """Dense matrix of pairwise kernel values.

    ``rows``/``cols`` are (m, 3) coordinates for the Euclidean family or
    integer node ids for the manifold family. With ``cols=None`` the square
    matrix over ``rows`` is assembled exactly symmetric.
    """
    square = cols is None
    if spec.family == EUCLIDEAN:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        cols_arr = rows if square else np.atleast_2d(np.asarray(cols, dtype=np.float64))
        mat = _matern_from_r(spec, cdist(rows, cols_arr))
    else:
        if basis is None:
            raise ValueError("manifold kernel_matrix requires a LaplacianBasis")
        psi = manifold_features(spec, basis)
        r = psi[_as_nodes(basis, rows)]
        c = r if square else psi[_as_nodes(basis, cols)]
        mat = r @ c.T
    return _mirror(mat) if square else mat


def kappa_gradient_matrix(spec: KernelSpec, rows,
                          basis: LaplacianBasis | None = None) -> np.ndarray:
    """d K / d kappa over a square block (used by the likelihood gradient)."""
    if spec.family == EUCLIDEAN:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return _mirror(_matern_dkappa_from_r(spec, cdist(rows, rows)))
    if basis is None:
        raise ValueError("manifold gradient requires a LaplacianBasis")
    idx = _as_nodes(basis, rows)
    vecs = basis.eigenvectors[idx]
    w = matern_weights(spec, basis.eigenvalues)
    dw = _dweights_dkappa(spec, basis.eigenvalues)
    c = w.sum() / basis.node_count
    dc = dw.sum() / basis.node_count
    term1 = (vecs * dw) @ vecs.T
    term2 = (vecs * w) @ vecs.T
    return _mirror(spec.variance / c * term1 - spec.variance * dc / c**2 * term2)
