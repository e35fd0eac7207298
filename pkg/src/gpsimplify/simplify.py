"""Greedy GP-driven point cloud simplification.

Pipeline: (1) optionally subsample a working set, (2) fit kernel
hyperparameters on a small random subset of it, (3) seed the active set by
farthest point sampling, then (4) repeatedly score every remaining point by
predictive standard deviation plus absolute prediction error of its surface
variation, moving the top-scoring batch into the active set until it holds
exactly M points. The selected points, in original cloud order, are the
simplified cloud; they double as the GP's training set, so scores of points
near freshly selected ones drop in later rounds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cloud_io import PointCloud
from .errors import BatchTooLarge, LengthMismatch, TargetTooLarge
from .geometry import VariationField
from .gp import GpState, extend_active_set, fit_gp, optimize_hyperparams, posterior_predict
from .kernels import EUCLIDEAN, KernelSpec, build_graph_laplacian, laplacian_eigenpairs
from .spatial import farthest_point_sample


@dataclass(frozen=True)
class SimplifyConfig:
    """Target size and selection-policy knobs.

    Exactly one of ``count`` (M) or ``ratio`` (M/N) must be set. ``k_add``
    defaults to one tenth of the growth budget M - k_init per round, so the
    greedy loop runs ten scoring rounds regardless of scale.
    """

    count: int | None = None
    ratio: float | None = None
    k_init_fraction: float = 1.0 / 3.0
    k_add: int | None = None
    k_opt: int = 200
    working_subsample: int | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    seed: int = 0

    def __post_init__(self):
        if (self.count is None) == (self.ratio is None):
            raise ValueError("set exactly one of count or ratio")
        if self.count is not None and self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.ratio is not None and not 0 < self.ratio < 1:
            raise ValueError(f"ratio must be in (0, 1), got {self.ratio}")
        if not 0 < self.k_init_fraction < 1:
            raise ValueError("k_init_fraction must be in (0, 1)")
        if self.k_add is not None and self.k_add < 1:
            raise ValueError("k_add must be >= 1")
        if self.k_opt < 2:
            raise ValueError("k_opt must be >= 2")

    def target_size(self, n: int) -> int:
        m = self.count if self.count is not None else int(self.ratio * n)
        if m >= n:
            raise TargetTooLarge(f"target M={m} must be < N={n}")
        if m < 1:
            raise TargetTooLarge(f"target M={m} must be >= 1")
        return m


@dataclass
class SelectionState:
    """Loop state handed to iteration observers (testing/instrumentation)."""

    active: np.ndarray      # positions into the working set
    remainder: np.ndarray   # positions into the working set
    scores: np.ndarray      # over remainder, pre-selection
    gp: GpState
    iteration: int


@dataclass
class SimplifyResult:
    cloud: PointCloud
    indices: np.ndarray     # ascending indices into the original cloud
    report: dict


def subsample_working_set(cloud: PointCloud, count: int | None, seed=0) -> np.ndarray:
    """Uniform random subset of point indices (ascending), or all of them."""
    n = len(cloud)
    if count is None or count >= n:
        return np.arange(n, dtype=np.intp)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=count, replace=False)).astype(np.intp)


def selection_scores(posterior, targets) -> np.ndarray:
    """Predictive std plus absolute error: s = sqrt(var) + |mean - y|."""
    targets = np.asarray(targets, dtype=np.float64)
    if posterior.mean.shape != targets.shape:
        raise LengthMismatch(
            f"posterior over {posterior.mean.shape} vs targets {targets.shape}"
        )
    return np.sqrt(posterior.variance) + np.abs(posterior.mean - targets)


def select_batch(scores, remainder, k_add: int) -> np.ndarray:
    """Members of ``remainder`` with the k_add largest scores.

    Ties break toward the lower point index so selection is deterministic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    remainder = np.asarray(remainder, dtype=np.intp)
    if k_add > len(remainder):
        raise BatchTooLarge(f"k_add={k_add} exceeds |R|={len(remainder)}")
    order = np.lexsort((remainder, -scores))
    return remainder[order[:k_add]]


def _resolve_batch(config: SimplifyConfig, m: int, k_init: int) -> int:
    if config.k_add is not None:
        return config.k_add
    return max(1, math.ceil((m - k_init) / 10))


def simplify(cloud: PointCloud, field: VariationField, config: SimplifyConfig,
             observer=None) -> SimplifyResult:
    """Run the full greedy selection and return the simplified sub-cloud.

    ``field`` must hold the surface variation of every point of ``cloud``.
    ``observer``, if given, is called with a SelectionState after each
    scoring round. Output is deterministic for fixed (cloud, config, seed,
    thread count).
    """
    n = len(cloud)
    if len(field) != n:
        raise LengthMismatch(f"field over {len(field)} points, cloud has {n}")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    t_start = time.perf_counter()

    working = subsample_working_set(cloud, config.working_subsample, seeds[0])
    w_count = len(working)
    m_target = config.target_size(n)
    if m_target >= w_count:
        raise TargetTooLarge(
            f"target M={m_target} must be < working set size {w_count}"
        )
    w_points = cloud.points[working]
    y = field.values[working]

    spec = config.kernel
    basis = None
    t0 = time.perf_counter()
    if spec.family != EUCLIDEAN:
        lap = build_graph_laplacian(w_points, spec.graph_neighbors)
        basis = laplacian_eigenpairs(lap, min(spec.eigenpair_count, w_count))
    t_basis = time.perf_counter() - t0

    # hyperparameters from a small random subset of the working set
    rng = np.random.default_rng(seeds[1])
    k_opt = min(config.k_opt, w_count)
    opt_pos = np.sort(rng.choice(w_count, size=k_opt, replace=False))
    opt_x = opt_pos if basis is not None else w_points[opt_pos]
    t0 = time.perf_counter()
    fitted = optimize_hyperparams(spec, opt_x, y[opt_pos], basis=basis)
    t_opt = time.perf_counter() - t0

    t0 = time.perf_counter()
    k_init = min(max(1, int(config.k_init_fraction * m_target)), m_target)
    working_cloud = PointCloud(w_points)
    active = farthest_point_sample(working_cloud, k_init, seeds[2])
    mask = np.ones(w_count, dtype=bool)
    mask[active] = False
    remainder = np.flatnonzero(mask)

    def as_inputs(positions):
        return positions if basis is not None else w_points[positions]

    state = fit_gp(fitted.spec, as_inputs(active), y[active], fitted.noise, basis)
    k_add = _resolve_batch(config, m_target, k_init)
    iteration = 0
    active = np.asarray(active, dtype=np.intp)
    while len(active) < m_target:
        post = posterior_predict(state, as_inputs(remainder))
        scores = selection_scores(post, y[remainder])
        take = min(k_add, m_target - len(active))  # final batch truncated
        batch = select_batch(scores, remainder, take)
        state = extend_active_set(state, as_inputs(batch), y[batch])
        active = np.concatenate([active, batch])
        sel = np.isin(remainder, batch)
        remainder = remainder[~sel]
        iteration += 1
        if observer is not None:
            observer(SelectionState(active.copy(), remainder.copy(),
                                    scores, state, iteration))
    t_select = time.perf_counter() - t0

    indices = np.sort(working[active])
    report = {
        "input_size": n,
        "working_size": int(w_count),
        "output_size": int(m_target),
        "alpha": m_target / n,
        "kernel": {
            "family": fitted.spec.family,
            "variance": fitted.spec.variance,
            "lengthscale": fitted.spec.lengthscale,
            "nu": fitted.spec.nu,
            "noise": fitted.noise,
        },
        "k_init": int(k_init),
        "k_add": int(k_add),
        "k_opt": int(k_opt),
        "iterations": iteration,
        "lml_trace": [[int(i), float(v)] for i, v in fitted.trace],
        "seed": config.seed,
        "timings_s": {
            "basis": t_basis,
            "optimization": t_opt,
            "selection": t_select,
            "total": time.perf_counter() - t_start,
        },
    }
    return SimplifyResult(cloud.select(indices), indices, report)
