"""Non-parametric target estimation by local polynomial fits.

Given reference points with known scalar targets, the estimate at a
query is made from its k nearest reference points alone: their targets
are fit with a low order polynomial in the offsets from the query, and
the fit's constant term (the polynomial evaluated at the query) is the
answer.  Order 0 is the plain neighbour mean; orders 1 and 2 let the
estimate follow local trends and curvature, which is where the accuracy
gain over averaging comes from.

Fits are query-centered, so estimates are invariant under translating
the whole feature space.  The normal equations carry a small ridge
penalty on the non-constant coefficients (relative to the trace of the
normal matrix) so that duplicate or degenerate neighbourhoods stay
solvable; with the penalty at zero, polynomial targets of matching
order are reproduced exactly.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import PointSet
from .kdtree import KdTree, build_kdtree
from .knn import knn_search

_MAX_ORDER = 2
_CONDITION_LIMIT = 1e12


def n_coefficients(dim: int, order: int) -> int:
    """Length of the polynomial basis: 1, then +dim linear terms, then
    +dim(dim+1)/2 quadratic terms including all cross products."""
    if order == 0:
        return 1
    if order == 1:
        return 1 + dim
    return 1 + dim + dim * (dim + 1) // 2


@dataclass(frozen=True)
class FitConfig:
    """Neighbour count, polynomial order, and ridge strength.

    k of None picks 4x the coefficient count once the dimension is
    known.  `ridge` scales the mean diagonal of the normal matrix, so
    its effect is invariant under rescaling the features; zero disables
    regularization entirely.
    """

    k: int | None = None
    order: int = 1
    ridge: float = 1e-9

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.order not in (0, 1, 2):
            raise ValueError("order must be 0, 1, or 2")
        if not self.ridge >= 0.0:
            raise ValueError("ridge must be >= 0")

    def resolved_k(self, dim: int) -> int:
        if self.k is not None:
            return self.k
        return 4 * n_coefficients(dim, self.order)


@dataclass(frozen=True)
class EstimateResult:
    """One estimate with its fit diagnostics."""

    estimate: float
    neighbor_count: int
    order_used: int      # may be below the configured order when k is small
    condition_flag: bool  # neighbourhood was degenerate or near-singular


@dataclass(frozen=True)
class EstimateBatch:
    """Per-point estimates and degenerate-fit flags."""

    estimates: np.ndarray
    condition_flags: np.ndarray

    def __post_init__(self):
        self.estimates.flags.writeable = False
        self.condition_flags.flags.writeable = False


@dataclass(frozen=True)
class EvalReport:
    """Cross-validated comparison of two fit configurations.

    improvement_percent is the reduction of RMS error going from config
    a to config b, with a bootstrap percentile interval over paired
    per-point residuals.
    """

    rms_a: float
    mae_a: float
    rms_b: float
    mae_b: float
    improvement_percent: float
    ci_low: float
    ci_high: float
    folds: int
    n_points: int


def _require_reference(ref: PointSet) -> None:
    if ref.targets is None:
        raise ValueError("reference points must carry targets")
    if ref.n == 0:
        raise ValueError("reference set must not be empty")


def _design_matrix(diff: np.ndarray, order: int) -> np.ndarray:
    cols = [np.ones((diff.shape[0], 1))]
    if order >= 1:
        cols.append(diff)
    if order >= 2:
        iu, ju = np.triu_indices(diff.shape[1])
        cols.append(diff[:, iu] * diff[:, ju])
    return np.hstack(cols)


def _fit_constant_term(diff, targets, order, ridge):
    """Least-squares constant term of the centered polynomial fit.

    Returns (estimate, condition_flag).  The ridge penalty multiplies
    the mean diagonal of the non-constant block of the normal matrix
    and never touches the constant term, so the neighbour mean is the
    exact infinite-ridge limit.
    """
    if order == 0:
        return float(targets.mean()), False
    design = _design_matrix(diff, order)
    gram = design.T @ design
    rhs = design.T @ targets
    p = gram.shape[0]
    eigs = np.linalg.eigvalsh(gram)
    flagged = bool(eigs[0] <= 0.0 or eigs[-1] > _CONDITION_LIMIT * eigs[0])
    penalty = np.eye(p)
    penalty[0, 0] = 0.0
    lam = ridge * (np.trace(gram) - gram[0, 0]) / (p - 1)
    try:
        coeffs = np.linalg.solve(gram + lam * penalty, rhs)
    except np.linalg.LinAlgError:
        coeffs = np.linalg.lstsq(design, targets, rcond=None)[0]
        flagged = True
    return float(coeffs[0]), flagged


def estimate_target(ref: PointSet, query, cfg: FitConfig = FitConfig(),
                    tree: KdTree | None = None) -> EstimateResult:
    """Estimate the target at `query` from its nearest reference points.

    Parameters
    ----------
    ref : PointSet
        Reference points; must carry targets.
    query : array_like
        D coordinates.
    cfg : FitConfig
    tree : KdTree, optional
        Search tree over `ref`, built here when absent (pass one when
        estimating repeatedly).

    Returns
    -------
    EstimateResult
        neighbor_count reports the k actually used (clamped to the
        reference size); order_used drops below cfg.order when the
        neighbours cannot determine that many coefficients.
    """
    _require_reference(ref)
    query = np.ascontiguousarray(query, dtype=np.float64)
    if query.shape != (ref.dim,):
        raise ValueError(f"query must have shape ({ref.dim},)")
    if not np.isfinite(query).all():
        raise ValueError("query must be finite")
    k = min(cfg.resolved_k(ref.dim), ref.n)
    order = cfg.order
    while order > 0 and n_coefficients(ref.dim, order) > k:
        order -= 1
    if tree is None:
        tree = build_kdtree(ref)
    ids = knn_search(tree, ref, query, k).ids
    diff = ref.coords[ids] - query
    estimate, flagged = _fit_constant_term(diff, ref.targets[ids], order, cfg.ridge)
    return EstimateResult(estimate=estimate, neighbor_count=k,
                          order_used=order, condition_flag=flagged)


def estimate_all(ref: PointSet, unknown: PointSet,
                 cfg: FitConfig = FitConfig(),
                 tree: KdTree | None = None,
                 progress=None, workers: int = 1) -> EstimateBatch:
    """Estimate targets for every point of `unknown`.

    Deterministic and independent of evaluation order: `workers` > 1
    splits the unknown set across threads without changing any result.
    `progress`, when given, is called as progress(done, total) every
    1000 points and once at the end.
    """
    _require_reference(ref)
    if unknown.dim != ref.dim:
        raise ValueError("reference and unknown dimensions differ")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    estimates = np.empty(unknown.n)
    flags = np.empty(unknown.n, dtype=bool)
    if unknown.n == 0:
        return EstimateBatch(estimates=estimates, condition_flags=flags)
    if tree is None:
        tree = build_kdtree(ref)
    coords = unknown.coords
    done = 0
    done_lock = threading.Lock()

    def run_span(start: int, stop: int) -> None:
        nonlocal done
        for i in range(start, stop):
            res = estimate_target(ref, coords[i], cfg, tree=tree)
            estimates[i] = res.estimate
            flags[i] = res.condition_flag
            if progress is not None:
                with done_lock:
                    done += 1
                    if done % 1000 == 0 or done == unknown.n:
                        progress(done, unknown.n)

    if workers == 1:
        run_span(0, unknown.n)
    else:
        edges = np.linspace(0, unknown.n, workers + 1).astype(int)
        spans = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b]
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            for future in [pool.submit(run_span, a, b) for a, b in spans]:
                future.result()
    return EstimateBatch(estimates=estimates, condition_flags=flags)


def evaluate_estimator(ref: PointSet, cfg_a: FitConfig, cfg_b: FitConfig,
                       folds: int = 5, seed: int = 0,
                       bootstrap: int = 1000) -> EvalReport:
    """k-fold cross-validated comparison of two configurations.

    Each fold's points are estimated from the remaining folds under
    both configurations; errors are collected per point so the two
    configurations are compared on identical splits.  The improvement
    interval is a percentile bootstrap over paired residuals.
    """
    _require_reference(ref)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if ref.n < folds:
        raise ValueError("need at least one point per fold")
    rng = np.random.default_rng(seed)
    fold_of = rng.permuted(np.arange(ref.n) % folds)
    err_a = np.empty(ref.n)
    err_b = np.empty(ref.n)
    for fold in range(folds):
        test = np.flatnonzero(fold_of == fold)
        train = np.flatnonzero(fold_of != fold)
        train_set = ref.take(train)
        test_set = ref.take(test)
        tree = build_kdtree(train_set)
        for cfg, err in ((cfg_a, err_a), (cfg_b, err_b)):
            batch = estimate_all(train_set, test_set, cfg, tree=tree)
            err[test] = batch.estimates - ref.targets[test]

    def rms(x):
        return float(np.sqrt(np.mean(x * x)))

    def improvement(a, b):
        denom = rms(a)
        return 0.0 if denom == 0.0 else 100.0 * (denom - rms(b)) / denom

    draws = np.empty(bootstrap)
    for i in range(bootstrap):
        pick = rng.integers(0, ref.n, size=ref.n)
        draws[i] = improvement(err_a[pick], err_b[pick])
    return EvalReport(
        rms_a=rms(err_a), mae_a=float(np.abs(err_a).mean()),
        rms_b=rms(err_b), mae_b=float(np.abs(err_b).mean()),
        improvement_percent=improvement(err_a, err_b),
        ci_low=float(np.percentile(draws, 2.5)),
        ci_high=float(np.percentile(draws, 97.5)),
        folds=folds, n_points=ref.n)
