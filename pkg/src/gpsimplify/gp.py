"""Exact Gaussian process regression on a zero-mean prior.

Training state caches the lower Cholesky factor of K + (noise + jitter) I
and the solved vector alpha; prediction, marginal likelihood, analytic
gradients, and first-order hyperparameter search all run off that factor.
The active set can be extended by a block Cholesky update so the greedy
selection loop never refactors from scratch.

For the manifold kernel, whose Gram matrix is an exact finite feature
expansion k(i, j) = psi_i . psi_j, predictive variance is computed in
feature space (via the matrix inversion lemma) whenever the basis is
smaller than the training set. Both routes are algebraically identical;
the feature route turns the per-query cost from O(m^2) into O(L^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import (
    EmptyQuery,
    FactorStale,
    IndefiniteBlock,
    NonFiniteObjective,
)
from .kernels import (
    EUCLIDEAN,
    KernelSpec,
    LaplacianBasis,
    kappa_gradient_matrix,
    kernel_matrix,
    manifold_features,
)

JITTER_SCALE = 1e-6  # of the prior variance, added once per factorization


@dataclass(frozen=True)
class GpState:
    """Immutable training state; mutation happens by constructing new states."""

    kernel: KernelSpec
    noise: float
    train_x: np.ndarray     # (m, 3) coordinates or (m,) node ids
    train_y: np.ndarray     # (m,)
    chol: np.ndarray        # (m, m) lower triangular factor
    alpha: np.ndarray       # (m,), solves (K + noise I + jitter I) alpha = y
    jitter: float
    basis: LaplacianBasis | None = None

    @property
    def size(self) -> int:
        return len(self.train_y)

    def _check(self):
        m = self.size
        if self.chol.shape != (m, m) or self.alpha.shape != (m,) or len(self.train_x) != m:
            raise FactorStale("factor/alpha shapes inconsistent with training data")


@dataclass(frozen=True)
class Posterior:
    mean: np.ndarray
    variance: np.ndarray
    cov: np.ndarray | None = None


def _as_inputs(spec: KernelSpec, x) -> np.ndarray:
    if spec.family == EUCLIDEAN:
        arr = np.asarray(x, dtype=np.float64)
        return arr.reshape(0, 3) if arr.size == 0 else np.atleast_2d(arr)
    return np.asarray(x, dtype=np.intp).ravel()


def _factor(mat: np.ndarray) -> np.ndarray:
    return cholesky(mat, lower=True)


def fit_gp(spec: KernelSpec, x, y, noise: float,
           basis: LaplacianBasis | None = None) -> GpState:
    """Factor the training covariance and solve for alpha.

    Jitter of JITTER_SCALE * variance is added to the diagonal; one retry
    at 10x on factorization failure, after which IndefiniteBlock is raised.
    """
    x = _as_inputs(spec, x)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ValueError(f"{len(x)} inputs vs {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if not noise > 0:
        raise ValueError(f"noise variance must be positive, got {noise}")
    m = len(y)
    if m == 0:
        empty = np.empty((0, 0))
        return GpState(spec, noise, x, y, empty, np.empty(0), JITTER_SCALE * spec.variance, basis)
    kmat = kernel_matrix(spec, x, basis=basis)
    for jitter in (JITTER_SCALE * spec.variance, 10 * JITTER_SCALE * spec.variance):
        try:
            low = _factor(kmat + (noise + jitter) * np.eye(m))
        except np.linalg.LinAlgError:
            continue
        alpha = cho_solve((low, True), y)
        return GpState(spec, noise, x, y, low, alpha, jitter, basis)
    raise IndefiniteBlock("training covariance not PD even with 10x jitter")


def _prior_diag(state: GpState, queries) -> np.ndarray:
    if state.kernel.family == EUCLIDEAN:
        return np.full(len(queries), state.kernel.variance)
    psi = manifold_features(state.kernel, state.basis)[queries]
    return np.einsum("ij,ij->i", psi, psi)


def posterior_predict(state: GpState, queries, want_full_cov: bool = False) -> Posterior:
    """Posterior mean and (co)variance at the query points/nodes."""
    state._check()
    queries = _as_inputs(state.kernel, queries)
    q = len(queries)
    if q == 0:
        raise EmptyQuery("no query points")
    if state.size == 0:
        var = _prior_diag(state, queries)
        cov = kernel_matrix(state.kernel, queries, basis=state.basis) if want_full_cov else None
        return Posterior(np.zeros(q), var, cov)

    use_features = (
        state.kernel.family != EUCLIDEAN
        and len(state.basis) < state.size
    )
    if use_features:
        return _predict_feature_space(state, queries, want_full_cov)

    kstar = kernel_matrix(state.kernel, queries, state.train_x, basis=state.basis)
    mean = kstar @ state.alpha
    v = solve_triangular(state.chol, kstar.T, lower=True)
    var = _prior_diag(state, queries) - np.einsum("ij,ij->j", v, v)
    cov = None
    if want_full_cov:
        kss = kernel_matrix(state.kernel, queries, basis=state.basis)
        cov = kss - v.T @ v
    return Posterior(mean, np.maximum(var, 0.0), cov)


def _predict_feature_space(state: GpState, queries, want_full_cov: bool) -> Posterior:
    # K = Psi Psi^T exactly, so with n2 = noise + jitter and
    # B = Psi_m^T Psi_m + n2 I (L x L):
    #   mean = Psi_q (Psi_m^T alpha),  Sigma = n2 Psi_q B^-1 Psi_q^T
    psi = manifold_features(state.kernel, state.basis)
    psi_m = psi[state.train_x]
    psi_q = psi[queries]
    n2 = state.noise + state.jitter
    mean = psi_q @ (psi_m.T @ state.alpha)
    b = psi_m.T @ psi_m + n2 * np.eye(psi.shape[1])
    low = _factor(b)
    v = solve_triangular(low, psi_q.T, lower=True)
    var = n2 * np.einsum("ij,ij->j", v, v)
    cov = n2 * (v.T @ v) if want_full_cov else None
    return Posterior(mean, np.maximum(var, 0.0), cov)


def log_marginal_likelihood(state: GpState) -> float:
    """Gaussian evidence of the training targets under the current factor."""
    state._check()
    m = state.size
    if m < 1:
        raise EmptyQuery("log marginal likelihood needs training data")
    return float(
        -0.5 * state.train_y @ state.alpha
        - np.sum(np.log(np.diag(state.chol)))
        - 0.5 * m * math.log(2.0 * math.pi)
    )


def _gradient_matrices(state: GpState):
    """dKhat/d(log variance, log lengthscale, log noise) as dense blocks."""
    m = state.size
    kmat = kernel_matrix(state.kernel, state.train_x, basis=state.basis)
    eye = np.eye(m)
    # jitter scales with the prior variance, so it rides along in d/dlog variance
    d_logvar = kmat + state.jitter * eye
    d_logkappa = state.kernel.lengthscale * kappa_gradient_matrix(
        state.kernel, state.train_x, basis=state.basis
    )
    d_lognoise = state.noise * eye
    return d_logvar, d_logkappa, d_lognoise


def lml_gradient(state: GpState) -> np.ndarray:
    """Analytic gradient over (log variance, log lengthscale, log noise).

    Standard trace identity: dL/dtheta = 1/2 tr((alpha alpha^T - Khat^-1)
    dKhat/dtheta). Smoothness nu is grid-selected, not differentiated.
    """
    state._check()
    if state.size < 1:
        raise EmptyQuery("gradient needs training data")
    kinv = cho_solve((state.chol, True), np.eye(state.size))
    p = np.outer(state.alpha, state.alpha) - kinv
    return np.array([0.5 * np.sum(p * d) for d in _gradient_matrices(state)])


def extend_active_set(state: GpState, new_x, new_y) -> GpState:
    """Add training points via a block Cholesky row, never a full refactor.

    Equals a from-scratch factorization to round-off. If the Schur
    complement is not PD the whole factor is rebuilt once at 10x jitter;
    failing that, IndefiniteBlock.
    """
    state._check()
    new_x = _as_inputs(state.kernel, new_x)
    new_y = np.asarray(new_y, dtype=np.float64).ravel()
    if len(new_x) != len(new_y):
        raise ValueError(f"{len(new_x)} inputs vs {len(new_y)} targets")
    k = len(new_y)
    if k == 0:
        return state
    if state.kernel.family != EUCLIDEAN:
        if np.intersect1d(state.train_x, new_x).size:
            raise ValueError("new nodes overlap the active set")
    if state.size == 0:
        return fit_gp(state.kernel, new_x, new_y, state.noise, state.basis)

    m = state.size
    spec, basis = state.kernel, state.basis
    k12 = kernel_matrix(spec, state.train_x, new_x, basis=basis)
    k22 = kernel_matrix(spec, new_x, basis=basis) + (state.noise + state.jitter) * np.eye(k)
    l21 = solve_triangular(state.chol, k12, lower=True).T
    schur = k22 - l21 @ l21.T
    x_all = np.concatenate([state.train_x, new_x])
    y_all = np.concatenate([state.train_y, new_y])
    try:
        l22 = _factor(schur)
    except np.linalg.LinAlgError:
        # conditioning fallback: one full refactor at escalated jitter
        kmat = kernel_matrix(spec, x_all, basis=basis)
        jitter = 10 * state.jitter
        try:
            low = _factor(kmat + (state.noise + jitter) * np.eye(m + k))
        except np.linalg.LinAlgError as exc:
            raise IndefiniteBlock("Schur complement not PD at 10x jitter") from exc
        alpha = cho_solve((low, True), y_all)
        return replace(state, train_x=x_all, train_y=y_all, chol=low,
                       alpha=alpha, jitter=jitter)

    low = np.zeros((m + k, m + k))
    low[:m, :m] = state.chol
    low[m:, :m] = l21
    low[m:, m:] = l22
    alpha = cho_solve((low, True), y_all)
    return replace(state, train_x=x_all, train_y=y_all, chol=low, alpha=alpha)


# --- hyperparameter search -------------------------------------------------


@dataclass(frozen=True)
class OptimizeResult:
    spec: KernelSpec
    noise: float
    lml: float
    trace: tuple          # accepted (iteration, lml) pairs for the best nu


_NU_GRID = (0.5, 1.5, 2.5)
_LOG_BOUND = 25.0


def _initial_theta(spec: KernelSpec, x, y, basis) -> np.ndarray:
    var_y = max(float(np.var(y)), 1e-8)
    if spec.family == EUCLIDEAN:
        extent = np.linalg.norm(np.ptp(np.asarray(x, dtype=np.float64), axis=0))
        kappa = 0.1 * extent if extent > 0 else 1.0
    else:
        lam = basis.eigenvalues
        mid = float(np.median(lam[lam > 1e-12])) if np.any(lam > 1e-12) else 1.0
        kappa = math.sqrt(2.0 * spec.nu / mid)
    return np.log([var_y, kappa, max(1e-2 * var_y, 1e-10)])


def _theta_lml_grad(spec: KernelSpec, theta, x, y, basis):
    trial = spec.with_params(variance=math.exp(theta[0]), lengthscale=math.exp(theta[1]))
    state = fit_gp(trial, x, y, math.exp(theta[2]), basis)
    return log_marginal_likelihood(state), lml_gradient(state)


def optimize_hyperparams(spec: KernelSpec, x, y, budget: int = 100,
                         basis: LaplacianBasis | None = None) -> OptimizeResult:
    """First-order ascent of the evidence in log-parameter space.

    For each smoothness value on the grid, runs adaptive-step gradient
    ascent from scale-aware initialization (variance and noise from the
    target variance, lengthscale from the data extent or graph spectrum)
    and returns the best configuration seen anywhere. Deterministic.
    """
    x = _as_inputs(spec, x)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) < 2:
        raise ValueError("hyperparameter optimization needs at least 2 points")
    best = None
    for nu in _NU_GRID:
        nu_spec = spec.with_params(nu=nu)
        theta = _initial_theta(nu_spec, x, y, basis)
        try:
            lml, grad = _theta_lml_grad(nu_spec, theta, x, y, basis)
        except (np.linalg.LinAlgError, IndefiniteBlock):
            continue
        if not np.isfinite(lml):
            continue
        trace = [(0, lml)]
        step = 0.1
        evals = 1
        while evals < budget and step > 1e-8:
            proposal = np.clip(theta + step * grad, -_LOG_BOUND, _LOG_BOUND)
            try:
                new_lml, new_grad = _theta_lml_grad(nu_spec, proposal, x, y, basis)
            except (np.linalg.LinAlgError, IndefiniteBlock):
                new_lml = -np.inf
            evals += 1
            if np.isfinite(new_lml) and new_lml > lml:
                theta, lml, grad = proposal, new_lml, new_grad
                trace.append((evals, lml))
                step *= 1.5
            else:
                step *= 0.5
        if best is None or lml > best[0]:
            best = (lml, nu_spec.with_params(
                variance=math.exp(theta[0]), lengthscale=math.exp(theta[1])
            ), math.exp(theta[2]), tuple(trace))
    if best is None:
        raise NonFiniteObjective("no finite likelihood at any initialization")
    lml, out_spec, noise, trace = best
    return OptimizeResult(out_spec, noise, lml, trace)
