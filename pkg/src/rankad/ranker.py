"""Rank quantization, preference pairs, and the kernel pairwise margin solver.

The solver fits a scoring function g(x) = sum_a beta_a * k(x_a, x) in the
radial-basis RKHS by minimizing

    F(beta) = 0.5 * beta' K beta + C * sum_{(i,j) in P} max(0, 1 - (s_i - s_j))

with s = K beta over the span of the training points.  Pairs (i, j) assert
point i should score above point j.  Optimization runs a sequence of
smoothed-hinge stages (L-BFGS on a Huberized objective with decreasing
smoothing) followed by a subgradient polish with diminishing steps; the best
iterate under the exact objective is tracked throughout, so the recorded
objective history is non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .dataset import DataMatrix

logger = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 1e-9


class SolverError(RuntimeError):
    """Numerical failure inside the margin solver (non-finite objective)."""


@dataclass(frozen=True)
class KernelConfig:
    """Radial-basis kernel exp(-||x - x'||^2 / sigma^2)."""

    sigma: float
    kind: str = "rbf"

    def __post_init__(self) -> None:
        if self.kind != "rbf":
            raise ValueError(f"unsupported kernel kind {self.kind!r}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"bandwidth must be positive and finite, got {self.sigma}")


def rbf_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """Gram matrix of the radial-basis kernel between row sets x and y.

    Values lie in (0, 1], equal to 1 exactly when the points coincide.
    """
    sq = cdist(np.atleast_2d(x), np.atleast_2d(y), "sqeuclidean")
    return np.exp(-sq / (sigma * sigma))


def quantize(r_values: np.ndarray, m: int) -> np.ndarray:
    """Uniform quantization of scores in [0, 1] into levels {1, ..., m}.

    level = 1 + floor(r * m), clamped to m at r = 1.

    Raises:
        ValueError: m < 2 or scores outside [0, 1].
    """
    if m < 2:
        raise ValueError(f"need at least 2 quantization levels, got {m}")
    r = np.asarray(r_values, dtype=np.float64)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("scores must lie in [0, 1]")
    return np.minimum(1 + np.floor(r * m).astype(np.int64), m)


@dataclass(frozen=True)
class PreferenceSet:
    """Ordered index pairs (i, j) meaning item i ranks above item j.

    Attributes:
        pairs: (p, 2) int array of (higher, lower) indices.
        levels: the (n,) quantized levels the pairs were generated from.
    """

    pairs: np.ndarray
    levels: np.ndarray

    def __post_init__(self) -> None:
        pairs = np.ascontiguousarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        levels = np.ascontiguousarray(self.levels, dtype=np.int64)
        n = levels.shape[0]
        if pairs.size:
            if pairs.min() < 0 or pairs.max() >= n:
                raise ValueError("pair indices out of range")
            if np.any(levels[pairs[:, 0]] <= levels[pairs[:, 1]]):
                raise ValueError("every pair must order a higher level above a lower one")
            encoded = pairs[:, 0] * n + pairs[:, 1]
            if np.unique(encoded).size != encoded.size:
                raise ValueError("duplicate pairs")
        pairs.setflags(write=False)
        levels.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    @property
    def is_complete(self) -> bool:
        """Whether every cross-level pair is present (nothing subsampled).

        With no duplicates allowed, matching the full cross-level count
        implies the set is exactly the complete one.
        """
        counts = np.bincount(self.levels)
        total = int(self.levels.size)
        return len(self) * 2 == total * total - int((counts * counts).sum())


def make_pairs(levels: np.ndarray, max_pairs: int | None = None,
               seed: int | None = None) -> PreferenceSet:
    """All ordered cross-level pairs, higher-level index first.

    Pairs are enumerated level-block by level-block in ascending (higher,
    lower) level order, indices ascending within each block, so output is
    deterministic.  If ``max_pairs`` is given and exceeded, a seeded uniform
    subsample of exactly that many pairs is kept (canonical order preserved).
    """
    lv = np.asarray(levels, dtype=np.int64)
    if lv.ndim != 1:
        raise ValueError("levels must be a vector")
    present = np.unique(lv)
    blocks: list[np.ndarray] = []
    for a_pos, a in enumerate(present):
        idx_a = np.flatnonzero(lv == a)
        for b in present[:a_pos]:
            idx_b = np.flatnonzero(lv == b)
            hi = np.repeat(idx_a, idx_b.size)
            lo = np.tile(idx_b, idx_a.size)
            blocks.append(np.column_stack([hi, lo]))
    pairs = np.concatenate(blocks, axis=0) if blocks else np.empty((0, 2), dtype=np.int64)
    if max_pairs is not None and pairs.shape[0] > max_pairs:
        if seed is None:
            raise ValueError("capping pairs requires a seed")
        keep = np.random.default_rng(seed).choice(pairs.shape[0], size=max_pairs, replace=False)
        pairs = pairs[np.sort(keep)]
    return PreferenceSet(pairs, lv)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for :func:`train_ranksvm`.

    Attributes:
        rel_tol: stop the polish phase once the best objective improves by
            less than this relative amount between sweeps.
        max_sweeps: polish-phase sweep budget.
        smooth_deltas: decreasing smoothing widths for the Huberized stages.
        stage_maxiter: L-BFGS iteration cap per smoothing stage.
        eigen_cutoff: relative eigenvalue floor for the whitened coordinates;
            directions below it cannot change the objective meaningfully.
        init: optional starting coefficient vector (defaults to zeros).
    """

    rel_tol: float = 1e-6
    max_sweeps: int = 5000
    smooth_deltas: tuple[float, ...] = (1e-1, 1e-3, 1e-6)
    stage_maxiter: int = 500
    eigen_cutoff: float = 1e-12
    init: np.ndarray | None = None


@dataclass(frozen=True)
class RankModel:
    """Learned kernel scoring function g(x) = sum_a beta_a * k(x_a, x).

    Attributes:
        support_points: (s, d) coordinates with coefficients above the
            magnitude cutoff; s <= n always.
        coefficients: (s,) expansion coefficients.
        kernel: kernel configuration.
        objective: final (best) value of the training objective, computed on
            the full coefficient vector before small entries were dropped.
        objective_history: best-so-far objective recorded per solver step;
            non-increasing by construction.
    """

    support_points: np.ndarray
    coefficients: np.ndarray
    kernel: KernelConfig
    objective: float
    objective_history: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(self.support_points, dtype=np.float64)
        coef = np.ascontiguousarray(self.coefficients, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("support points must be a 2-d array")
        if coef.shape != (pts.shape[0],):
            raise ValueError("one coefficient per support point required")
        if coef.size and not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        history = self.objective_history
        if history is None:
            history = np.asarray([self.objective], dtype=np.float64)
        history = np.ascontiguousarray(history, dtype=np.float64)
        pts.setflags(write=False)
        coef.setflags(write=False)
        history.setflags(write=False)
        object.__setattr__(self, "support_points", pts)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "objective_history", history)

    @property
    def n_support(self) -> int:
        return self.coefficients.shape[0]

    @property
    def dim(self) -> int:
        return self.support_points.shape[1]


def evaluate(model: RankModel, query: np.ndarray) -> float:
    """Score a single point: sum_a beta_a * k(support_a, query)."""
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != model.dim:
        raise ValueError(f"query dimension {q.shape[0]} != model dimension {model.dim}")
    if model.n_support == 0:
        return 0.0
    sq = ((model.support_points - q) ** 2).sum(axis=1)
    sigma = model.kernel.sigma
    return float(model.coefficients @ np.exp(-sq / (sigma * sigma)))


def evaluate_many(model: RankModel, queries: np.ndarray) -> np.ndarray:
    """Vectorized :func:`evaluate` over rows of a (m, d) array."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != model.dim:
        raise ValueError(f"query dimension {q.shape[1]} != model dimension {model.dim}")
    if model.n_support == 0:
        return np.zeros(q.shape[0])
    return rbf_kernel(q, model.support_points, model.kernel.sigma) @ model.coefficients


class _LevelBuckets:
    """Complete cross-level pair sets admit O(n log n) hinge sums: per ordered
    level pair, sort each side's scores once and count/accumulate violating
    partners with binary searches and prefix sums."""

    def __init__(self, levels: np.ndarray):
        present = np.unique(levels)
        self.groups = [np.flatnonzero(levels == value) for value in present]

    def hinge(self, s: np.ndarray) -> float:
        total = 0.0
        sorted_scores = [np.sort(s[g]) for g in self.groups]
        sums = [np.concatenate([[0.0], np.cumsum(sc)]) for sc in sorted_scores]
        for a, idx_a in enumerate(self.groups):
            sa = s[idx_a]
            for b in range(a):
                sb, psb = sorted_scores[b], sums[b]
                pos = np.searchsorted(sb, sa - 1.0, side="right")
                cnt = sb.size - pos
                total += float(np.sum(cnt * (1.0 - sa) + (psb[-1] - psb[pos])))
        return total

    def smoothed(self, s: np.ndarray, delta: float) -> tuple[float, np.ndarray]:
        loss = 0.0
        slack = np.zeros(s.size)
        sorted_scores = [np.sort(s[g]) for g in self.groups]
        sums = [np.concatenate([[0.0], np.cumsum(sc)]) for sc in sorted_scores]
        sqsums = [np.concatenate([[0.0], np.cumsum(sc * sc)]) for sc in sorted_scores]
        for a, idx_a in enumerate(self.groups):
            sa = s[idx_a]
            for b in range(a):
                idx_b = self.groups[b]
                sb_sorted, psb, psb2 = sorted_scores[b], sums[b], sqsums[b]
                sa_sorted, psa = sorted_scores[a], sums[a]
                # Loss and the higher side's slack, windowed over the lower side.
                pos_zero = np.searchsorted(sb_sorted, sa - 1.0, side="right")
                pos_full = np.searchsorted(sb_sorted, sa - 1.0 + delta, side="left")
                cnt_full = sb_sorted.size - pos_full
                sum_full = psb[-1] - psb[pos_full]
                cnt_part = pos_full - pos_zero
                sum_part = psb[pos_full] - psb[pos_zero]
                sq_part = psb2[pos_full] - psb2[pos_zero]
                c1 = 1.0 - sa
                loss += float(np.sum(cnt_full * (c1 - 0.5 * delta) + sum_full))
                loss += float(np.sum(cnt_part * c1 * c1 + 2.0 * c1 * sum_part + sq_part)) / (2.0 * delta)
                slack[idx_a] -= cnt_full + (cnt_part * c1 + sum_part) / delta
                # The lower side's slack, windowed over the higher side.
                sb = s[idx_b]
                qos_zero = np.searchsorted(sa_sorted, sb + 1.0, side="left")
                qos_full = np.searchsorted(sa_sorted, sb + 1.0 - delta, side="right")
                d_full = qos_full
                d_cnt = qos_zero - qos_full
                d_sum = psa[qos_zero] - psa[qos_full]
                slack[idx_b] += d_full + (d_cnt * (1.0 + sb) - d_sum) / delta
        return loss, slack

    def exact_slack(self, s: np.ndarray) -> np.ndarray:
        slack = np.zeros(s.size)
        sorted_scores = [np.sort(s[g]) for g in self.groups]
        for a, idx_a in enumerate(self.groups):
            sa = s[idx_a]
            for b in range(a):
                idx_b = self.groups[b]
                sb_sorted = sorted_scores[b]
                sa_sorted = sorted_scores[a]
                slack[idx_a] -= sb_sorted.size - np.searchsorted(sb_sorted, sa - 1.0, side="right")
                slack[idx_b] += np.searchsorted(sa_sorted, s[idx_b] + 1.0, side="left")
        return slack


class _HingeTerms:
    """Hinge sums and slack vectors over a preference set, given score vectors.

    Complete cross-level sets use the level-bucket path; capped (subsampled)
    sets fall back to explicit pair indexing.
    """

    def __init__(self, prefs: PreferenceSet):
        self.buckets = _LevelBuckets(prefs.levels) if prefs.is_complete else None
        self.hi = prefs.pairs[:, 0]
        self.lo = prefs.pairs[:, 1]
        self.n = prefs.levels.shape[0]

    def hinge(self, s: np.ndarray) -> float:
        if self.buckets is not None:
            return self.buckets.hinge(s)
        viol = 1.0 - (s[self.hi] - s[self.lo])
        return float(viol[viol > 0].sum())

    def smoothed(self, s: np.ndarray, delta: float) -> tuple[float, np.ndarray]:
        if self.buckets is not None:
            return self.buckets.smoothed(s, delta)
        t = 1.0 - (s[self.hi] - s[self.lo])
        loss = float(np.where(t >= delta, t - 0.5 * delta,
                              np.clip(t, 0.0, None) ** 2 / (2.0 * delta)).sum())
        w = np.clip(t / delta, 0.0, 1.0)
        slack = (np.bincount(self.lo, weights=w, minlength=self.n)
                 - np.bincount(self.hi, weights=w, minlength=self.n))
        return loss, slack

    def slack(self, s: np.ndarray) -> np.ndarray:
        if self.buckets is not None:
            return self.buckets.exact_slack(s)
        active = (s[self.hi] - s[self.lo]) < 1.0
        return (np.bincount(self.lo[active], minlength=self.n)
                - np.bincount(self.hi[active], minlength=self.n)).astype(np.float64)


def _train_core(gram: np.ndarray, prefs: PreferenceSet, c_weight: float,
                opts: SolverOptions) -> tuple[np.ndarray, float, np.ndarray]:
    """Minimize the pairwise margin objective over expansion coefficients.

    Works in eigen-whitened coordinates z with s = B z and B = V sqrt(L)
    from the Gram decomposition K = V L V', so the quadratic term is the
    identity and L-BFGS converges regardless of the kernel's conditioning.
    Directions with eigenvalues below the relative cutoff cannot move the
    objective and are dropped; the returned coefficients are the minimum-norm
    representative.

    Returns (best coefficients, best exact objective, recorded history).
    """
    n = gram.shape[0]
    terms = _HingeTerms(prefs)
    eigvals, eigvecs = np.linalg.eigh(gram)
    keep = eigvals > opts.eigen_cutoff * max(eigvals[-1], 0.0)
    eigvals = eigvals[keep]
    eigvecs = eigvecs[:, keep]
    basis = eigvecs * np.sqrt(eigvals)

    if opts.init is None:
        z = np.zeros(basis.shape[1])
    else:
        init = np.asarray(opts.init, dtype=np.float64)
        if init.shape != (n,):
            raise ValueError(f"init must have shape ({n},)")
        z = np.sqrt(eigvals) * (eigvecs.T @ init)

    def exact(zv: np.ndarray) -> float:
        value = 0.5 * float(zv @ zv) + c_weight * terms.hinge(basis @ zv)
        if not np.isfinite(value):
            raise SolverError(
                f"objective became non-finite (C={c_weight}, pairs={len(prefs)}, n={n})"
            )
        return value

    best_z = z.copy()
    best_obj = exact(z)
    history = [best_obj]

    def track(candidate: np.ndarray) -> None:
        nonlocal best_obj, best_z
        value = exact(candidate)
        if value < best_obj:
            best_obj = value
            best_z = candidate.copy()
        history.append(best_obj)

    def smoothed(zv: np.ndarray, delta: float) -> tuple[float, np.ndarray]:
        s = basis @ zv
        loss, slack = terms.smoothed(s, delta)
        value = 0.5 * float(zv @ zv) + c_weight * loss
        grad = zv + c_weight * (basis.T @ slack)
        return value, grad

    for delta in opts.smooth_deltas:
        result = minimize(
            smoothed,
            best_z,
            args=(delta,),
            jac=True,
            method="L-BFGS-B",
            callback=track,
            options={"maxiter": opts.stage_maxiter, "ftol": 1e-16, "gtol": 1e-14},
        )
        track(result.x)

    # Subgradient polish with diminishing normalized steps and best-iterate
    # tracking; stops when a sweep improves the best objective by less than
    # rel_tol relative.
    z = best_z.copy()
    scale = 0.1 * (1.0 + float(np.linalg.norm(z)))
    previous = best_obj
    for sweep in range(1, opts.max_sweeps + 1):
        direction = z + c_weight * (basis.T @ terms.slack(basis @ z))
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            break
        z = z - (scale / (np.sqrt(sweep) * norm)) * direction
        track(z)
        if previous - best_obj < opts.rel_tol * max(1.0, abs(previous)):
            break
        previous = best_obj

    beta = (eigvecs / np.sqrt(eigvals)) @ best_z
    return beta, best_obj, np.asarray(history)


def train_ranksvm(data: DataMatrix, prefs: PreferenceSet, kernel: KernelConfig,
                  c_weight: float, options: SolverOptions | None = None) -> RankModel:
    """Fit the kernel ranker to a preference set.

    Args:
        data: training points; pair indices refer to its rows.
        prefs: nonempty ordered preference pairs.
        kernel: radial-basis configuration.
        c_weight: positive weight on the hinge sum (per-pair, unnormalized).
        options: solver knobs; defaults are suitable up to a few thousand
            points.

    Returns:
        RankModel keeping only coefficients with magnitude above 1e-9.

    Raises:
        ValueError: empty preference set or non-positive c_weight.
        SolverError: the objective became non-finite during optimization.
    """
    if len(prefs) == 0:
        raise ValueError("preference set is empty; nothing to fit")
    if not (c_weight > 0):
        raise ValueError(f"c_weight must be positive, got {c_weight}")
    if prefs.pairs.max() >= data.n:
        raise ValueError("preference indices exceed data size")
    opts = options or SolverOptions()
    gram = rbf_kernel(data.points, data.points, kernel.sigma)
    beta, _, history = _train_core(gram, prefs, c_weight, opts)
    # Report the objective of the returned coefficients directly.
    terms = _HingeTerms(prefs)
    s = gram @ beta
    objective = 0.5 * float(beta @ s) + c_weight * terms.hinge(s)
    keep = np.abs(beta) > SUPPORT_THRESHOLD
    logger.debug(
        "trained ranker: n=%d pairs=%d support=%d objective=%.6g",
        data.n, len(prefs), int(keep.sum()), objective,
    )
    return RankModel(
        support_points=data.points[keep],
        coefficients=beta[keep],
        kernel=kernel,
        objective=objective,
        objective_history=history,
    )
