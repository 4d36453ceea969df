"""Test-stage scoring, alpha-level anomaly decisions, and decision grids.

A detector pairs a trained ranker with the sorted scores of its training
points.  A query's anomaly score is the fraction of training scores strictly
below the query's score (one kernel evaluation plus a binary search), so low
scores mean anomalous; the decision thresholds the score at a target
false-alarm level alpha, inclusively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import DataMatrix
from .ranker import KernelConfig, RankModel, evaluate, evaluate_many

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DetectorState:
    """Immutable detector: ranker plus ascending training scores.

    Attributes:
        model: trained kernel ranker.
        sorted_train_scores: non-decreasing scores of the training points.
        alpha: default false-alarm level in (0, 1).
    """

    model: RankModel
    sorted_train_scores: np.ndarray
    alpha: float = 0.05

    def __post_init__(self) -> None:
        scores = np.ascontiguousarray(self.sorted_train_scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 1:
            raise ValueError("sorted_train_scores must be a nonempty vector")
        if np.any(np.diff(scores) < 0):
            raise ValueError("training scores must be sorted ascending")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        scores.setflags(write=False)
        object.__setattr__(self, "sorted_train_scores", scores)

    @property
    def n_train(self) -> int:
        return self.sorted_train_scores.size

    @property
    def dim(self) -> int:
        return self.model.dim


class Decision(NamedTuple):
    anomalous: bool
    score: float


def build_detector(model: RankModel, train: DataMatrix | np.ndarray,
                   alpha: float = 0.05) -> DetectorState:
    """Evaluate the ranker on the training points and sort the scores."""
    points = train.points if isinstance(train, DataMatrix) else np.asarray(train)
    scores = np.sort(evaluate_many(model, points))
    return DetectorState(model, scores, alpha)


def score(state: DetectorState, query: np.ndarray) -> float:
    """Anomaly score: fraction of training scores strictly below the query's.

    0 means the query scores below every training point (maximally
    anomalous); 1 means above all of them.  Cost is one kernel evaluation
    plus a binary search.
    """
    g = evaluate(state.model, query)
    below = int(np.searchsorted(state.sorted_train_scores, g, side="left"))
    return below / state.n_train


def score_many(state: DetectorState, queries: np.ndarray) -> np.ndarray:
    """Vectorized :func:`score` over rows."""
    g = evaluate_many(state.model, queries)
    below = np.searchsorted(state.sorted_train_scores, g, side="left")
    return below / state.n_train


def decide(state: DetectorState, query: np.ndarray, alpha: float | None = None) -> Decision:
    """Declare the query anomalous iff its score is <= alpha (inclusive).

    Returns the score alongside, so other levels can be applied by
    re-thresholding without re-scoring.
    """
    level = state.alpha if alpha is None else alpha
    if not (0.0 < level < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {level}")
    value = score(state, query)
    return Decision(anomalous=value <= level, score=value)


@dataclass(frozen=True)
class DecisionGrid:
    """Score field on a regular 2-D grid plus per-alpha anomaly masks."""

    x_coords: np.ndarray
    y_coords: np.ndarray
    scores: np.ndarray
    masks: dict[float, np.ndarray]


def decision_grid(state: DetectorState, bounds: Sequence, resolution: int = 200,
                  alphas: Sequence[float] = (0.05,)) -> DecisionGrid:
    """Evaluate scores on a regular grid over a 2-D box.

    ``bounds`` is ((xmin, xmax), (ymin, ymax)).  The mask for each alpha is
    the boolean field {score <= alpha}, indexed [iy, ix] like the score field.

    Raises:
        ValueError: model dimension is not 2 (grid export is 2-D only), or
            resolution < 2.
    """
    if state.dim != 2:
        raise ValueError(f"grid export is 2-D only; model dimension is {state.dim}")
    if resolution < 2:
        raise ValueError(f"need resolution >= 2, got {resolution}")
    (xmin, xmax), (ymin, ymax) = bounds
    if not (xmin < xmax and ymin < ymax):
        raise ValueError("bounds must satisfy min < max per axis")
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys)
    flat = np.column_stack([gx.ravel(), gy.ravel()])
    values = score_many(state, flat).reshape(resolution, resolution)
    masks = {float(a): values <= a for a in alphas}
    return DecisionGrid(xs, ys, values, masks)


def grid_to_csv(grid: DecisionGrid, path: str | Path) -> None:
    """Export (x, y, score) rows plus one 0/1 mask column per alpha."""
    alphas = sorted(grid.masks)
    header = ["x", "y", "score"] + [f"mask_{a:g}" for a in alphas]
    lines = [",".join(header)]
    for iy, y in enumerate(grid.y_coords):
        for ix, x in enumerate(grid.x_coords):
            cells = [repr(float(x)), repr(float(y)), repr(float(grid.scores[iy, ix]))]
            cells += [str(int(grid.masks[a][iy, ix])) for a in alphas]
            lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def save_detector(state: DetectorState, path: str | Path, config: dict | None = None) -> None:
    """Serialize a detector as self-describing JSON.

    Floats are encoded with full round-trip precision, so a load reproduces
    scoring outputs exactly.  ``config`` is echoed verbatim for provenance.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kernel": {"kind": state.model.kernel.kind, "sigma": state.model.kernel.sigma},
        "dim": state.model.dim,
        "n_support": state.model.n_support,
        "support_points": state.model.support_points.tolist(),
        "coefficients": state.model.coefficients.tolist(),
        "objective": state.model.objective,
        "sorted_train_scores": state.sorted_train_scores.tolist(),
        "alpha": state.alpha,
        "config": config or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_detector(path: str | Path) -> DetectorState:
    """Inverse of :func:`save_detector`."""
    doc = json.loads(Path(path).read_text())
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported detector schema version: {version!r}")
    support = np.asarray(doc["support_points"], dtype=np.float64).reshape(-1, doc["dim"])
    model = RankModel(
        support_points=support,
        coefficients=np.asarray(doc["coefficients"], dtype=np.float64),
        kernel=KernelConfig(sigma=doc["kernel"]["sigma"], kind=doc["kernel"]["kind"]),
        objective=doc["objective"],
    )
    return DetectorState(
        model=model,
        sorted_train_scores=np.asarray(doc["sorted_train_scores"], dtype=np.float64),
        alpha=doc["alpha"],
    )


def read_detector_config(path: str | Path) -> dict:
    """Return the config echo stored alongside a serialized detector."""
    return json.loads(Path(path).read_text()).get("config", {})
