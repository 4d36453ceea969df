"""AUC, false-alarm curves, density oracles, and the scoring-time harness.

Scores follow the low-means-anomalous convention throughout, so AUC is the
probability that a random nominal point outscores a random anomaly, with
half credit for ties.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import DataMatrix, MixtureDensity, sample_anomaly_box, sample_mixture, _check_box
from .detector import DetectorState, score, score_many


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Exact rank-statistic AUC with half credit for ties.

    Args:
        scores: finite scores, low = anomalous.
        labels: 0 nominal / 1 anomaly; both classes must be present.

    Returns:
        P(score of a nominal > score of an anomaly) + 0.5 P(equal).
    """
    values = np.asarray(scores, dtype=np.float64)
    marks = np.asarray(labels)
    if values.shape != marks.shape or values.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    nominal = marks == 0
    n0 = int(nominal.sum())
    n1 = values.size - n0
    if n0 == 0 or n1 == 0:
        raise ValueError("both classes must be present to compute AUC")
    ranks = rankdata(values)
    return float((ranks[nominal].sum() - n0 * (n0 + 1) / 2) / (n0 * n1))


def false_alarm_curve(state: DetectorState, fresh_nominal: DataMatrix,
                      alphas: Sequence[float]) -> list[tuple[float, float]]:
    """Fraction of fresh nominal points declared anomalous at each level.

    Levels are reported in ascending order; rates are non-decreasing in
    alpha by construction of the thresholding.
    """
    if len(alphas) == 0:
        raise ValueError("need at least one alpha")
    values = score_many(state, fresh_nominal.points)
    return [(float(a), float(np.mean(values <= a))) for a in sorted(alphas)]


class PValueEstimate(NamedTuple):
    value: float
    std_error: float


def oracle_pvalue(density: MixtureDensity, query: np.ndarray, mc_samples: int = 100_000,
                  seed: int = 0) -> PValueEstimate:
    """Monte Carlo p-value: mass of the region where the density is at most
    its value at the query."""
    estimate = float(oracle_pvalues(density, np.atleast_2d(np.asarray(query, dtype=np.float64)),
                                    mc_samples, seed)[0])
    return PValueEstimate(estimate, float(np.sqrt(estimate * (1 - estimate) / mc_samples)))


def oracle_pvalues(density: MixtureDensity, queries: np.ndarray, mc_samples: int = 100_000,
                   seed: int = 0) -> np.ndarray:
    """Vectorized :func:`oracle_pvalue` sharing one Monte Carlo sample."""
    if mc_samples < 10_000:
        raise ValueError(f"need mc_samples >= 10000, got {mc_samples}")
    draws = sample_mixture(density, mc_samples, seed)
    ordered = np.sort(density.pdf(draws.points))
    f_query = density.pdf(np.atleast_2d(np.asarray(queries, dtype=np.float64)))
    return np.searchsorted(ordered, f_query, side="right") / mc_samples


def _derive_seeds(seed: int, count: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=count)]


def bayes_auc(nominal_density: MixtureDensity, anomaly: MixtureDensity | np.ndarray | Sequence,
              n_nominal: int, n_anomaly: int, seed: int = 0) -> float:
    """AUC of the likelihood-ratio detector on a fresh labeled draw.

    The anomaly model is either a density or an axis-aligned uniform box.
    For a box, the ratio's denominator is the box's constant density
    everywhere (scores reduce to the nominal density's ordering); anomalies
    are drawn from the box, nominals from the nominal density.
    """
    seed_nom, seed_anom = _derive_seeds(seed, 2)
    nominal = sample_mixture(nominal_density, n_nominal, seed_nom)
    if isinstance(anomaly, MixtureDensity):
        anomalous = sample_mixture(anomaly, n_anomaly, seed_anom)
        def ratio(pts: np.ndarray) -> np.ndarray:
            return nominal_density.pdf(pts) / anomaly.pdf(pts)
    else:
        box = _check_box(anomaly)
        volume = float(np.prod(box[:, 1] - box[:, 0]))
        anomalous = sample_anomaly_box(box, n_anomaly, seed_anom)
        def ratio(pts: np.ndarray) -> np.ndarray:
            return nominal_density.pdf(pts) * volume
    points = np.vstack([nominal.points, anomalous.points])
    labels = np.concatenate([np.zeros(n_nominal, dtype=np.int8),
                             np.ones(n_anomaly, dtype=np.int8)])
    return auc(ratio(points), labels)


@dataclass(frozen=True)
class TimingRecord:
    """Wall-clock scoring measurements (medians over repeats).

    The scoring loop is single-threaded and per-point, so the per-point
    figure reflects the kernel-expansion cost plus the binary search.
    """

    total_seconds: float
    per_point_us: float
    n_points: int
    support_count: int
    train_count: int
    dim: int
    repeats: int = 5


def timing_run(state: DetectorState, test_data: DataMatrix, repeats: int = 5) -> TimingRecord:
    """Median wall-clock time to score every test point one at a time."""
    points = test_data.points
    score(state, points[0])  # warm-up
    totals = []
    for _ in range(repeats):
        start = time.perf_counter()
        for row in points:
            score(state, row)
        totals.append(time.perf_counter() - start)
    total = float(np.median(totals))
    return TimingRecord(
        total_seconds=total,
        per_point_us=total / points.shape[0] * 1e6,
        n_points=points.shape[0],
        support_count=state.model.n_support,
        train_count=state.n_train,
        dim=state.dim,
        repeats=repeats,
    )


@dataclass(frozen=True)
class EvalReport:
    """Bundle of evaluation outputs plus the configuration that produced them."""

    auc: float
    fa_curve: list[tuple[float, float]]
    timing: TimingRecord | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 <= self.auc <= 1.0):
            raise ValueError(f"auc must lie in [0, 1], got {self.auc}")
        rates = [r for _, r in self.fa_curve]
        if any(r2 < r1 for r1, r2 in zip(rates, rates[1:])):
            raise ValueError("false-alarm rates must be non-decreasing in alpha")

    def to_text(self) -> str:
        lines = [f"auc: {self.auc!r}"]
        for alpha, rate in self.fa_curve:
            lines.append(f"false_alarm[alpha={alpha:g}]: {rate!r}")
        if self.timing is not None:
            t = self.timing
            lines.append(
                f"timing: total_s={t.total_seconds:.6f} per_point_us={t.per_point_us:.3f} "
                f"s={t.support_count} n={t.train_count} d={t.dim} points={t.n_points}"
            )
        for key in sorted(self.config):
            lines.append(f"config.{key}: {self.config[key]}")
        return "\n".join(lines) + "\n"
