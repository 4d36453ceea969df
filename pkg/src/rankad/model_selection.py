"""4-fold cross-validation over (C, sigma) scored by pairwise disagreement.

The search grid follows the benchmark recipe: C on a 1-3 decade ladder from
0.001 to 1000, and bandwidths 2^i (i = -10..10) times the mean 20-NN distance
of the training sample.  Folds partition points; pairs are regenerated inside
each fold from the precomputed rank scores, and pairs straddling the
train/validation boundary are dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DataMatrix
from .knn_score import KnnScoreTable, avg_knn_distances
from .ranker import (KernelConfig, PreferenceSet, RankModel, SolverError, SolverOptions,
                     evaluate_many, make_pairs, quantize, train_ranksvm)

logger = logging.getLogger(__name__)

PAPER_C_GRID = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)
SIGMA_EXPONENTS = tuple(range(-10, 11))

# Ranking grid cells tolerates much shallower solves than fitting the final
# model; this is the default budget for cross_validate.
CV_SOLVER_OPTIONS = SolverOptions(smooth_deltas=(1e-1, 1e-3), stage_maxiter=150,
                                  max_sweeps=100)


def mean_knn_distance(data: DataMatrix, k: int) -> float:
    """Mean over all points of the average distance to their k nearest
    neighbors (self excluded); the bandwidth scale for the sigma grid.

    Raises:
        ValueError: n <= k (not enough neighbors after self-exclusion).
    """
    if data.n <= k:
        raise ValueError(f"need n > k, got n={data.n}, k={k}")
    return float(np.mean(avg_knn_distances(data.points, data.points, k, exclude_self=True)))


def wpdl(model: RankModel, data: DataMatrix, prefs: PreferenceSet) -> int:
    """Pairwise disagreement loss: pairs the model ranks strictly backwards.

    Ties are not violations, so a constant model scores 0; cells producing
    empty (all-dropped) models are disqualified separately in
    :func:`cross_validate`.
    """
    if len(prefs) == 0:
        return 0
    scores = evaluate_many(model, data.points)
    hi, lo = prefs.pairs[:, 0], prefs.pairs[:, 1]
    return int(np.sum(scores[hi] < scores[lo]))


@dataclass(frozen=True)
class CvGrid:
    """Hyperparameter grid for :func:`cross_validate`."""

    c_values: tuple[float, ...]
    sigma_values: tuple[float, ...]
    folds: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.c_values or not self.sigma_values:
            raise ValueError("grid must contain at least one C and one sigma")
        if any(c <= 0 for c in self.c_values) or any(s <= 0 for s in self.sigma_values):
            raise ValueError("grid values must be positive")
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")

    @classmethod
    def paper_defaults(cls, scale: float, folds: int = 4, seed: int = 0) -> "CvGrid":
        """The benchmark grid around a bandwidth scale (the mean 20-NN distance)."""
        if scale <= 0:
            raise ValueError(f"bandwidth scale must be positive, got {scale}")
        sigmas = tuple(float(2.0 ** i) * scale for i in SIGMA_EXPONENTS)
        return cls(c_values=PAPER_C_GRID, sigma_values=sigmas, folds=folds, seed=seed)


@dataclass(frozen=True)
class CvResult:
    """Cross-validation outcome.

    Attributes:
        best_c, best_sigma: the selected cell (ties broken by smaller C,
            then smaller sigma).
        mean_losses: (n_c, n_sigma) mean validation loss per cell; inf marks
            disqualified or failed cells.
        fold_losses: (n_c, n_sigma, folds) per-fold losses.
        grid: the grid searched.
    """

    best_c: float
    best_sigma: float
    mean_losses: np.ndarray
    fold_losses: np.ndarray
    grid: CvGrid


def _is_degenerate(model: RankModel, val_data: DataMatrix, val_prefs: PreferenceSet) -> bool:
    """Whether the model is effectively constant on the held-out pairs.

    Strict-inequality loss lets a model that ties most validation pairs score
    spuriously well; this catches the empty-support case's sneakier cousin
    (bandwidths so extreme the kernel underflows off-sample).
    """
    if len(val_prefs) == 0:
        return False
    scores = evaluate_many(model, val_data.points)
    ties = scores[val_prefs.pairs[:, 0]] == scores[val_prefs.pairs[:, 1]]
    return bool(ties.mean() > 0.5)


def assign_folds(n: int, folds: int, seed: int) -> np.ndarray:
    """Deterministic fold id per point: a seeded permutation cut into
    near-equal consecutive chunks (first n % folds chunks get the extra)."""
    if n < folds:
        raise ValueError(f"need n >= folds, got n={n}, folds={folds}")
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=np.int64)
    sizes = [n // folds + (1 if i < n % folds else 0) for i in range(folds)]
    offset = 0
    for fold, size in enumerate(sizes):
        out[perm[offset : offset + size]] = fold
        offset += size
    return out


def cross_validate(data: DataMatrix, score_table: KnnScoreTable, m: int, grid: CvGrid,
                   solver_options: SolverOptions | None = None,
                   max_pairs: int | None = None) -> CvResult:
    """Pick (C, sigma) minimizing mean held-out pairwise disagreement.

    Points are partitioned into folds; within each fold the precomputed rank
    scores of the training (resp. validation) points are re-quantized and
    paired among themselves, so no pair straddles the boundary.  Cells whose
    trained model loses all support points, or whose scores tie the majority
    of held-out pairs, are disqualified (either way a near-constant model
    would trivially score 0 under the strict-inequality loss).

    Raises:
        SolverError: every grid cell failed to train.
    """
    solver_options = solver_options or CV_SOLVER_OPTIONS
    fold_of = assign_folds(data.n, grid.folds, grid.seed)
    n_c, n_s = len(grid.c_values), len(grid.sigma_values)
    fold_losses = np.full((n_c, n_s, grid.folds), np.inf)
    failures: list[str] = []

    for si, sigma in enumerate(grid.sigma_values):
        kernel = KernelConfig(sigma)
        for fold in range(grid.folds):
            train_idx = np.flatnonzero(fold_of != fold)
            val_idx = np.flatnonzero(fold_of == fold)
            train_data = data.subset(train_idx)
            val_data = data.subset(val_idx)
            train_prefs = make_pairs(quantize(score_table.r_values[train_idx], m),
                                     max_pairs=max_pairs, seed=grid.seed)
            val_prefs = make_pairs(quantize(score_table.r_values[val_idx], m),
                                   max_pairs=max_pairs, seed=grid.seed)
            if len(train_prefs) == 0:
                failures.append(f"sigma={sigma:g} fold={fold}: no training pairs")
                continue
            for ci, c_weight in enumerate(grid.c_values):
                try:
                    model = train_ranksvm(train_data, train_prefs, kernel, c_weight,
                                          options=solver_options)
                except SolverError as exc:
                    failures.append(f"C={c_weight:g} sigma={sigma:g} fold={fold}: {exc}")
                    continue
                if model.n_support == 0 or _is_degenerate(model, val_data, val_prefs):
                    fold_losses[ci, si, fold] = np.inf
                else:
                    fold_losses[ci, si, fold] = wpdl(model, val_data, val_prefs)

    mean_losses = fold_losses.mean(axis=2)
    best = None
    for ci in range(n_c):
        for si in range(n_s):
            value = mean_losses[ci, si]
            if np.isfinite(value) and (best is None or value < best[0]):
                best = (value, ci, si)
    if best is None:
        raise SolverError(
            "every grid cell failed to train or was disqualified; diagnostics: "
            + "; ".join(failures[:10])
        )
    _, ci, si = best
    logger.info("cross-validation selected C=%g sigma=%g (mean loss %.3f)",
                grid.c_values[ci], grid.sigma_values[si], best[0])
    return CvResult(
        best_c=grid.c_values[ci],
        best_sigma=grid.sigma_values[si],
        mean_losses=mean_losses,
        fold_losses=fold_losses,
        grid=grid,
    )


def cv_report_to_csv(result: CvResult, path: str | Path) -> None:
    """Export (C, sigma, fold, loss) rows; the selected cell leads as a comment."""
    lines = [f"# selected_c={result.best_c!r} selected_sigma={result.best_sigma!r}",
             "c,sigma,fold,loss"]
    for ci, c_value in enumerate(result.grid.c_values):
        for si, sigma in enumerate(result.grid.sigma_values):
            for fold in range(result.grid.folds):
                loss = result.fold_losses[ci, si, fold]
                text = "inf" if not np.isfinite(loss) else repr(float(loss))
                lines.append(f"{c_value!r},{sigma!r},{fold},{text}")
    Path(path).write_text("\n".join(lines) + "\n")
