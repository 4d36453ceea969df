"""Average K-NN distance statistic and resampled empirical rank scores.

The depth statistic of a point is the mean of its distances to the k nearest
reference points (Euclidean, exact — no approximate index).  Its rank score is
the fraction of reference statistics strictly greater than its own, which
estimates the p-value of the point under the data-generating density.

Rank scores for the training sample itself are computed with the half/half
resampling protocol: each round splits the data in two, computes each half's
depth statistics against the other half, ranks each point within the opposite
half's statistics, and the per-point scores are averaged over rounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import DataMatrix

# Cap on elements per distance block so memory stays modest for large n.
_BLOCK_ELEMS = 4_000_000


def _knn_means(queries: np.ndarray, reference: np.ndarray, k: int,
               self_index_offset: int | None = None) -> np.ndarray:
    """Mean of the k smallest distances from each query row to the reference.

    When ``self_index_offset`` is given, queries are assumed to be the
    reference rows starting at that offset and each row's self-distance is
    excluded by index.  The k selected distances are summed in ascending
    order so results are reproducible bit-for-bit.
    """
    n_ref = reference.shape[0]
    available = n_ref - (1 if self_index_offset is not None else 0)
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if k > available:
        raise ValueError(f"k={k} exceeds available reference size {available}")
    block = max(1, _BLOCK_ELEMS // max(n_ref, 1))
    out = np.empty(queries.shape[0])
    for lo in range(0, queries.shape[0], block):
        hi = min(lo + block, queries.shape[0])
        dists = cdist(queries[lo:hi], reference)
        if self_index_offset is not None:
            rows = np.arange(lo, hi)
            dists[rows - lo, rows + self_index_offset] = np.inf
        smallest = np.partition(dists, k - 1, axis=1)[:, :k]
        smallest.sort(axis=1)
        out[lo:hi] = smallest.mean(axis=1)
    return out


def avg_knn_distance(query: np.ndarray, reference: DataMatrix, k: int,
                     exclude_index: int | None = None) -> float:
    """Average distance from ``query`` to its k nearest reference points.

    Args:
        query: a d-vector.
        reference: reference points.
        k: neighbor count, >= 1.
        exclude_index: when the query is itself a reference row, its row
            index, so the zero self-distance is dropped before selection.

    Raises:
        ValueError: k exceeds the usable reference size, or dimensions clash.
    """
    q = np.asarray(query, dtype=np.float64).reshape(1, -1)
    if q.shape[1] != reference.dim:
        raise ValueError(f"query dimension {q.shape[1]} != reference dimension {reference.dim}")
    if exclude_index is not None and not (0 <= exclude_index < reference.n):
        raise ValueError(f"exclude_index {exclude_index} out of range")
    pts = reference.points
    if exclude_index is not None:
        mask = np.ones(reference.n, dtype=bool)
        mask[exclude_index] = False
        pts = pts[mask]
    return float(_knn_means(q, pts, k)[0])


def avg_knn_distances(queries: np.ndarray, reference: np.ndarray, k: int,
                      exclude_self: bool = False) -> np.ndarray:
    """Vectorized depth statistics for many queries against one reference set.

    With ``exclude_self`` the queries must BE the reference array (scored
    against the rest of the sample, each point's own row excluded).
    """
    q = np.asarray(queries, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if exclude_self and q.shape != ref.shape:
        raise ValueError("exclude_self requires queries to be the reference array")
    return _knn_means(q, ref, k, self_index_offset=0 if exclude_self else None)


def rank_score(query_g: float, reference_g: np.ndarray) -> float:
    """Fraction of reference statistics strictly greater than the query's.

    Ties count as not-greater, so a query tied with every reference value
    scores 0.  Small statistic (dense neighborhood) gives a score near 1.
    """
    ref = np.asarray(reference_g, dtype=np.float64)
    if ref.size == 0:
        raise ValueError("reference statistics must be nonempty")
    if not np.all(np.isfinite(ref)):
        raise ValueError("reference statistics must be finite")
    return float(np.count_nonzero(query_g < ref)) / ref.size


def rank_scores(query_g: np.ndarray, reference_g: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rank_score` via one sort plus binary searches."""
    ref = np.sort(np.asarray(reference_g, dtype=np.float64))
    if ref.size == 0:
        raise ValueError("reference statistics must be nonempty")
    greater = ref.size - np.searchsorted(ref, np.asarray(query_g), side="right")
    return greater / ref.size


@dataclass(frozen=True)
class KnnScoreTable:
    """Per-point depth statistics and rank scores for a training sample.

    Attributes:
        g_values: (n,) mean over rounds of each point's depth statistic.
        r_values: (n,) mean over rounds of each point's rank score, in [0, 1].
        k: neighbor count used.
        rounds: resampling rounds (0 for the plain single-pass variant).
    """

    g_values: np.ndarray
    r_values: np.ndarray
    k: int
    rounds: int

    def __post_init__(self) -> None:
        g = np.asarray(self.g_values, dtype=np.float64)
        r = np.asarray(self.r_values, dtype=np.float64)
        if g.shape != r.shape or g.ndim != 1:
            raise ValueError("g_values and r_values must be equal-length vectors")
        if not np.all(np.isfinite(g)):
            raise ValueError("depth statistics must be finite")
        if np.any(r < 0) or np.any(r > 1):
            raise ValueError("rank scores must lie in [0, 1]")
        g.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "g_values", g)
        object.__setattr__(self, "r_values", r)


def plain_ranks(data: DataMatrix, k: int) -> KnnScoreTable:
    """Single-pass variant: depth against the full sample with self-exclusion,
    each point ranked within all n statistics.

    With distinct statistics the score multiset is exactly
    {0/n, 1/n, ..., (n-1)/n}.
    """
    g = avg_knn_distances(data.points, data.points, k, exclude_self=True)
    r = rank_scores(g, g)
    return KnnScoreTable(g, r, k=k, rounds=0)


def _round_split(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One half/half split; for odd n the first (reference-first) half is larger."""
    perm = rng.permutation(n)
    n_first = (n + 1) // 2
    return perm[:n_first], perm[n_first:]


def _pool_k(k: int, pool: int, n: int, scale: bool) -> int:
    """Neighbor count used inside a half-sized pool.

    With scaling on (default) the count keeps the full-sample k/n ratio, so
    the statistic targets the same density quantile it would on all n points;
    this mirrors tying the neighbor index to the pool size in the resampling
    analysis.  Without scaling, k is used as-is.
    """
    if not scale:
        return k
    return max(1, int(np.ceil(k * pool / n)))


def resampled_ranks(data: DataMatrix, k: int, rounds: int = 20, seed: int = 0,
                    scale_k_to_pool: bool = True) -> KnnScoreTable:
    """Half/half resampled rank scores for every training point.

    Per round: a seeded split into halves A and B; points in B get depth
    statistics with A as the neighbor pool and vice versa; each point is then
    ranked within the opposite half's statistics.  Final per-point scores
    (and statistics) are means over rounds.

    Raises:
        ValueError: n < 2k + 2 (halves too small for k neighbors), rounds < 1.
    """
    n = data.n
    if rounds < 1:
        raise ValueError(f"need rounds >= 1, got {rounds}")
    if n < 2 * k + 2:
        raise ValueError(f"need n >= 2k + 2 = {2 * k + 2} for resampling, got n={n}")
    rng = np.random.default_rng(seed)
    g_acc = np.zeros(n)
    r_acc = np.zeros(n)
    pts = data.points
    for _ in range(rounds):
        first, second = _round_split(n, rng)
        k_first_pool = _pool_k(k, first.size, n, scale_k_to_pool)
        k_second_pool = _pool_k(k, second.size, n, scale_k_to_pool)
        g_second = avg_knn_distances(pts[second], pts[first], k_first_pool)
        g_first = avg_knn_distances(pts[first], pts[second], k_second_pool)
        r_acc[first] += rank_scores(g_first, g_second)
        r_acc[second] += rank_scores(g_second, g_first)
        g_acc[first] += g_first
        g_acc[second] += g_second
    return KnnScoreTable(g_acc / rounds, r_acc / rounds, k=k, rounds=rounds)


def resampled_query_ranks(data: DataMatrix, queries: np.ndarray, k: int,
                          rounds: int = 20, seed: int = 0,
                          scale_k_to_pool: bool = True) -> np.ndarray:
    """Rank scores of fresh query points under the same resampling schedule.

    Replays the split sequence of :func:`resampled_ranks` for the same
    (data, rounds, seed): per round and per orientation, queries get depth
    statistics from one half as neighbor pool and are ranked within the other
    half's statistics.  Averages the 2 * rounds values per query.
    """
    n = data.n
    if rounds < 1:
        raise ValueError(f"need rounds >= 1, got {rounds}")
    if n < 2 * k + 2:
        raise ValueError(f"need n >= 2k + 2 = {2 * k + 2} for resampling, got n={n}")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != data.dim:
        raise ValueError(f"query dimension {q.shape[1]} != data dimension {data.dim}")
    rng = np.random.default_rng(seed)
    acc = np.zeros(q.shape[0])
    pts = data.points
    for _ in range(rounds):
        first, second = _round_split(n, rng)
        k_first_pool = _pool_k(k, first.size, n, scale_k_to_pool)
        k_second_pool = _pool_k(k, second.size, n, scale_k_to_pool)
        g_second = avg_knn_distances(pts[second], pts[first], k_first_pool)
        g_first = avg_knn_distances(pts[first], pts[second], k_second_pool)
        acc += rank_scores(avg_knn_distances(q, pts[first], k_first_pool), g_second)
        acc += rank_scores(avg_knn_distances(q, pts[second], k_second_pool), g_first)
    return acc / (2 * rounds)


def score_table_to_csv(table: KnnScoreTable, path: str | Path) -> None:
    """Export (index, g, r) rows for external plotting."""
    lines = ["index,g,r"]
    for i in range(table.g_values.size):
        lines.append(f"{i},{float(table.g_values[i])!r},{float(table.r_values[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n")
