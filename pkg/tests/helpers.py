"""Independent oracles used across the test suite.

These deliberately avoid the library's own code paths: distances are
recomputed per pair, AUC counts every (nominal, anomaly) pair, and the
margin objective is evaluated by direct summation over explicit pairs.
"""

import numpy as np


def knn_oracle(query, reference, k, exclude_index=None):
    """Average of the k smallest distances, via a full sort of all distances."""
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    dists = []
    for j, row in enumerate(np.asarray(reference, dtype=np.float64)):
        if j == exclude_index:
            continue
        dists.append(np.sqrt(np.sum((query - row) ** 2)))
    ordered = np.sort(np.asarray(dists))
    return float(np.mean(ordered[:k]))


def auc_oracle(scores, labels):
    """All-pairs counting AUC with half credit for ties, O(N^2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    nominal = scores[labels == 0]
    anomalous = scores[labels == 1]
    total = 0.0
    for a in nominal:
        for b in anomalous:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (nominal.size * anomalous.size)


def margin_objective(gram, pairs, c_weight, beta):
    """Direct summation of 0.5 b'Kb + C sum max(0, 1 - margin)."""
    s = gram @ np.asarray(beta, dtype=np.float64)
    total = 0.5 * float(np.asarray(beta) @ s)
    for i, j in pairs:
        total += c_weight * max(0.0, 1.0 - (s[i] - s[j]))
    return total


def _objective_on_grid(gram, pairs, c_weight, grid):
    """margin_objective evaluated on every row of a (g, n) grid array."""
    s = grid @ gram
    quad = 0.5 * np.einsum("gi,gi->g", grid, s)
    hinge = np.zeros(grid.shape[0])
    for i, j in pairs:
        hinge += np.clip(1.0 - (s[:, i] - s[:, j]), 0.0, None)
    return quad + c_weight * hinge


def zooming_grid_oracle(gram, pairs, c_weight, lo=-5.0, hi=5.0, rounds=5, width=21):
    """Grid search with iterative zooming.

    Sound as a global-minimum bracket because the objective is convex in the
    coefficients: the refined window always contains the coarse grid's best
    point and the global minimum's neighborhood.
    """
    n = gram.shape[0]
    center = np.zeros(n)
    half = (hi - lo) / 2.0
    best_val = np.inf
    for _ in range(rounds):
        axes = [np.linspace(c - half, c + half, width) for c in center]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.column_stack([m.ravel() for m in mesh])
        values = _objective_on_grid(gram, pairs, c_weight, grid)
        at = int(np.argmin(values))
        best_val = float(values[at])
        center = grid[at]
        half = half * 2.0 / (width - 1)
    return best_val


def dense_grid_oracle_2d(gram, pairs, c_weight, lo=-5.0, hi=5.0, step=1e-3):
    """Exhaustive 2-coefficient grid at a fixed step, evaluated in chunks."""
    axis = np.arange(lo, hi + step / 2, step)
    best = np.inf
    for a in axis:
        grid = np.column_stack([np.full(axis.size, a), axis])
        values = _objective_on_grid(gram, pairs, c_weight, grid)
        best = min(best, float(values.min()))
    return best
