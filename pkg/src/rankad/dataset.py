"""Data model, CSV ingestion, synthetic mixture generators, and splitting.

All randomness flows through numpy's seeded ``default_rng`` (PCG64); the same
(generator, seed, n) triple reproduces bit-identical draws on every platform.
Seeds are always explicit arguments, never taken from the clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

LABEL_NOMINAL = 0
LABEL_ANOMALY = 1

_LABEL_NAMES = {
    "nominal": LABEL_NOMINAL,
    "normal": LABEL_NOMINAL,
    "anomaly": LABEL_ANOMALY,
    "anomalous": LABEL_ANOMALY,
}


class DataError(ValueError):
    """Input data violates a structural requirement (parse failure, bad shape)."""


@dataclass(frozen=True)
class DataMatrix:
    """n points in R^d with optional nominal/anomaly labels.

    Attributes:
        points: (n, d) float64 array of feature values; every entry finite.
        labels: optional (n,) int8 array, 0 = nominal / 1 = anomaly.
        provenance: free-form record of generator + seed for synthetic data.

    Immutable after construction: the backing arrays are marked read-only,
    so instances are safe to share across threads.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    provenance: dict | None = None

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise DataError(f"points must be 2-dimensional (n, d), got shape {pts.shape}")
        n, d = pts.shape
        if n < 1 or d < 1:
            raise DataError(f"need n >= 1 and d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = np.argwhere(~np.isfinite(pts))[0]
            raise DataError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

        if self.labels is not None:
            lab = np.ascontiguousarray(self.labels, dtype=np.int8)
            if lab.shape != (n,):
                raise DataError(f"labels must have shape ({n},), got {lab.shape}")
            if not np.all((lab == LABEL_NOMINAL) | (lab == LABEL_ANOMALY)):
                raise DataError("labels must be 0 (nominal) or 1 (anomaly)")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, indices: np.ndarray) -> "DataMatrix":
        """Row selection preserving labels and provenance."""
        idx = np.asarray(indices, dtype=np.intp)
        labels = None if self.labels is None else self.labels[idx]
        return DataMatrix(self.points[idx], labels, self.provenance)


@dataclass(frozen=True)
class MixtureComponent:
    """One Gaussian component with diagonal covariance."""

    weight: float
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(self.mean, dtype=np.float64).reshape(-1)
        var = np.ascontiguousarray(self.variance, dtype=np.float64).reshape(-1)
        if mean.shape != var.shape:
            raise DataError(f"mean ({mean.shape}) and variance ({var.shape}) disagree")
        if self.weight <= 0:
            raise DataError(f"component weight must be positive, got {self.weight}")
        if np.any(var <= 0):
            raise DataError("covariance diagonal must be strictly positive")
        mean.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)


@dataclass(frozen=True)
class MixtureDensity:
    """Gaussian mixture with diagonal covariances, plus an optional uniform
    axis-aligned box from which anomalies are drawn.

    Attributes:
        components: mixture components; weights sum to 1 within 1e-12.
        anomaly_box: optional (d, 2) array of [lower, upper] bounds per axis.
    """

    components: tuple[MixtureComponent, ...]
    anomaly_box: np.ndarray | None = None

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if not comps:
            raise DataError("mixture needs at least one component")
        dims = {c.mean.shape[0] for c in comps}
        if len(dims) != 1:
            raise DataError(f"components disagree on dimension: {sorted(dims)}")
        total = float(sum(c.weight for c in comps))
        if abs(total - 1.0) > 1e-12:
            raise DataError(f"weights must sum to 1 within 1e-12, got {total!r}")
        object.__setattr__(self, "components", comps)
        if self.anomaly_box is not None:
            box = _check_box(self.anomaly_box)
            if box.shape[0] != comps[0].mean.shape[0]:
                raise DataError("anomaly box dimension disagrees with components")
            object.__setattr__(self, "anomaly_box", box)

    @property
    def dim(self) -> int:
        return self.components[0].mean.shape[0]

    def pdf(self, x: np.ndarray) -> np.ndarray | float:
        """Density values at x: shape (m, d) -> (m,) array, shape (d,) -> float."""
        pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if pts.shape[1] != self.dim:
            raise DataError(f"query dimension {pts.shape[1]} != density dimension {self.dim}")
        out = np.zeros(pts.shape[0])
        for comp in self.components:
            z = (pts - comp.mean) ** 2 / comp.variance
            norm = np.prod(2.0 * np.pi * comp.variance) ** 0.5
            out += comp.weight * np.exp(-0.5 * z.sum(axis=1)) / norm
        if np.asarray(x).ndim == 1:
            return float(out[0])
        return out


def _check_box(box: Sequence | np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(box, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError(f"box must have shape (d, 2), got {arr.shape}")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise DataError("box lower bounds must be strictly below upper bounds")
    arr.setflags(write=False)
    return arr


# Named generator presets for the benchmark experiments.  "toy-fig1" is a
# balanced two-blob mixture used for level-curve studies; "synth-sec62" is the
# unbalanced elongated two-blob mixture with a [-18, 18]^2 uniform anomaly box.
PRESET_NAMES = ("toy-fig1", "synth-sec62")


def preset_density(name: str) -> MixtureDensity:
    """Look up a named synthetic-benchmark density.

    Raises:
        DataError: unknown preset name (message lists valid names).
    """
    if name == "toy-fig1":
        return MixtureDensity(
            components=(
                MixtureComponent(0.5, [4.0, 1.0], [0.5, 0.5]),
                MixtureComponent(0.5, [4.0, -1.0], [0.5, 0.5]),
            )
        )
    if name == "synth-sec62":
        return MixtureDensity(
            components=(
                MixtureComponent(0.2, [5.0, 0.0], [1.0, 81.0]),
                MixtureComponent(0.8, [-5.0, 0.0], [81.0, 1.0]),
            ),
            anomaly_box=[[-18.0, 18.0], [-18.0, 18.0]],
        )
    raise DataError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")


def density_to_config(density: MixtureDensity) -> dict:
    """Plain-dict form of a mixture for the JSON config file format."""
    doc: dict = {
        "components": [
            {
                "weight": c.weight,
                "mean": c.mean.tolist(),
                "variance": c.variance.tolist(),
            }
            for c in density.components
        ]
    }
    if density.anomaly_box is not None:
        doc["anomaly_box"] = density.anomaly_box.tolist()
    return doc


def density_from_config(doc: dict) -> MixtureDensity:
    """Inverse of :func:`density_to_config`."""
    try:
        comps = tuple(
            MixtureComponent(float(c["weight"]), c["mean"], c["variance"])
            for c in doc["components"]
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed density config: {exc}") from exc
    return MixtureDensity(comps, doc.get("anomaly_box"))


def load_density_config(path: str | Path) -> MixtureDensity:
    """Read a mixture definition from a JSON config file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    return density_from_config(doc)


def _parse_label(cell: str, row: int, col: int) -> int:
    text = cell.strip()
    try:
        value = float(text)
    except ValueError:
        key = text.lower()
        if key in _LABEL_NAMES:
            return _LABEL_NAMES[key]
        raise DataError(
            f"cannot parse label {text!r} at row {row}, column {col}; "
            "expected 0/1 or nominal/anomaly"
        ) from None
    return LABEL_NOMINAL if value == 0 else LABEL_ANOMALY


def load_csv(path: str | Path, label_column: int | None = None) -> DataMatrix:
    """Read a comma-separated matrix of finite reals.

    A header row is auto-detected: if any feature cell of the first row fails
    to parse as a number, the row is skipped.  When ``label_column`` is given
    (0-based), that column is split off as labels (numeric: 0 = nominal,
    nonzero = anomaly; or the words nominal/anomaly).

    Raises:
        DataError: empty file, ragged rows, or a cell that fails to parse
            (the message names the 1-based row and column).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")

    rows = [line.split(",") for line in lines]
    arity = len(rows[0])
    if label_column is not None and not (0 <= label_column < arity):
        raise DataError(f"label column {label_column} out of range for {arity} columns")

    def parse_row(cells: list[str], row_no: int) -> tuple[list[float], int | None]:
        feats: list[float] = []
        label: int | None = None
        for col, cell in enumerate(cells):
            if col == label_column:
                label = _parse_label(cell, row_no, col + 1)
                continue
            try:
                feats.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse {cell.strip()!r} as a number "
                    f"at row {row_no}, column {col + 1}"
                ) from None
        return feats, label

    # Header detection: probe the first row's feature cells only.
    start = 0
    try:
        parse_row(rows[0], 1)
    except DataError:
        start = 1
        if len(rows) == 1:
            raise DataError(f"{path}: no data rows after header") from None

    feats_out: list[list[float]] = []
    labels_out: list[int] = []
    for i, cells in enumerate(rows[start:], start=start + 1):
        if len(cells) != arity:
            raise DataError(
                f"{path}: ragged row {i}: expected {arity} cells, got {len(cells)}"
            )
        feats, label = parse_row(cells, i)
        feats_out.append(feats)
        if label is not None:
            labels_out.append(label)

    points = np.asarray(feats_out, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        bad = np.argwhere(~np.isfinite(points))[0]
        raise DataError(
            f"{path}: non-finite value at row {bad[0] + start + 1}, column {bad[1] + 1}"
        )
    labels = np.asarray(labels_out, dtype=np.int8) if label_column is not None else None
    return DataMatrix(points, labels, provenance={"source": str(path)})


def save_csv(data: DataMatrix, path: str | Path, include_labels: bool | None = None) -> None:
    """Write a DataMatrix as CSV with a feature header (f0, f1, ...).

    Floats are written with ``repr`` so a load/save round trip is exact.
    ``include_labels`` defaults to whether labels are present.
    """
    path = Path(path)
    if include_labels is None:
        include_labels = data.labels is not None
    if include_labels and data.labels is None:
        raise DataError("cannot include labels: data has none")
    header = [f"f{i}" for i in range(data.dim)]
    if include_labels:
        header.append("label")
    out = [",".join(header)]
    for i in range(data.n):
        cells = [repr(float(v)) for v in data.points[i]]
        if include_labels:
            cells.append(str(int(data.labels[i])))
        out.append(",".join(cells))
    path.write_text("\n".join(out) + "\n")


def sample_mixture(density: MixtureDensity, n: int, seed: int) -> DataMatrix:
    """Draw n i.i.d. points from the mixture; labels all nominal.

    Component indices are drawn by weight, then a Gaussian draw per point;
    deterministic given the seed.
    """
    if n < 1:
        raise DataError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    weights = np.array([c.weight for c in density.components])
    means = np.stack([c.mean for c in density.components])
    sds = np.sqrt(np.stack([c.variance for c in density.components]))
    idx = rng.choice(len(density.components), size=n, p=weights)
    z = rng.standard_normal((n, density.dim))
    points = means[idx] + z * sds[idx]
    return DataMatrix(
        points,
        labels=np.zeros(n, dtype=np.int8),
        provenance={"generator": "mixture", "seed": seed, "n": n},
    )


def sample_anomaly_box(box: Sequence | np.ndarray, n: int, seed: int) -> DataMatrix:
    """Draw n uniform i.i.d. points from an axis-aligned box; labels all anomaly."""
    if n < 1:
        raise DataError(f"need n >= 1, got {n}")
    bounds = _check_box(box)
    rng = np.random.default_rng(seed)
    points = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, bounds.shape[0]))
    return DataMatrix(
        points,
        labels=np.full(n, LABEL_ANOMALY, dtype=np.int8),
        provenance={"generator": "uniform-box", "seed": seed, "n": n},
    )


def largest_remainder_sizes(total: int, fractions: Sequence[float]) -> list[int]:
    """Allocate ``total`` into integer part sizes proportional to fractions.

    Floors the quotas and hands leftover units to the largest fractional
    remainders (ties broken by lower index), so sizes are deterministic.
    """
    fracs = np.asarray(fractions, dtype=np.float64)
    if np.any(fracs <= 0):
        raise DataError("fractions must be positive")
    if abs(fracs.sum() - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1 within 1e-9, got {fracs.sum()!r}")
    quotas = fracs * total
    base = np.floor(quotas).astype(int)
    leftover = total - int(base.sum())
    if leftover:
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:leftover]] += 1
    return base.tolist()


def split(data: DataMatrix, fractions: Sequence[float], seed: int) -> list[DataMatrix]:
    """Disjoint partition of rows by a seeded shuffle.

    The concatenation of the parts is a permutation of the input rows; part
    sizes follow the largest-remainder rule.
    """
    sizes = largest_remainder_sizes(data.n, fractions)
    if min(sizes) == 0:
        raise DataError(f"a fraction is too small for {data.n} rows (would yield an empty part)")
    perm = np.random.default_rng(seed).permutation(data.n)
    parts = []
    offset = 0
    for size in sizes:
        parts.append(data.subset(perm[offset : offset + size]))
        offset += size
    return parts
