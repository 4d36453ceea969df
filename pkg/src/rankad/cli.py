"""Command-line front end wiring the library into reproducible pipelines.

One binary with subcommands:

    synth      generate benchmark datasets from named presets or a config
    train      fit a detector from a nominal training CSV
    score      score a CSV against a model file
    eval       AUC / false-alarm report on labeled test data
    grid       export a 2-D decision grid for external plotting
    cv-report  run (C, sigma) cross-validation and export the loss table

Every command is deterministic given its flags; commands that use randomness
require an explicit --seed (never defaulted from the clock).  Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset
from .dataset import DataError, DataMatrix, load_csv, preset_density, save_csv
from .detector import (DetectorState, build_detector, decision_grid, grid_to_csv,
                       load_detector, read_detector_config, save_detector, score_many)
from .evaluation import EvalReport, auc, false_alarm_curve, timing_run
from .knn_score import resampled_ranks
from .model_selection import CvGrid, cross_validate, cv_report_to_csv, mean_knn_distance
from .ranker import (KernelConfig, SolverError, make_pairs, quantize, train_ranksvm)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DEFAULT_K = 20
DEFAULT_M = 3
DEFAULT_ROUNDS = 20
DEFAULT_C = 3.0
DEFAULT_ALPHA = 0.05
# Bandwidth rule for --sigma auto: this multiple of the mean 20-NN distance.
SIGMA_AUTO_FACTOR = 8.0


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 1, not 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_meta(path: Path, config: dict) -> None:
    path.write_text(json.dumps(config, indent=1, sort_keys=True) + "\n")


def _config_echo(args: argparse.Namespace, **extra) -> dict:
    skip = {"func"}
    doc = {key: value for key, value in vars(args).items() if key not in skip}
    doc.update(extra)
    return doc


def resolve_sigma(spec: str, data: DataMatrix) -> tuple[float, float]:
    """Resolve a --sigma flag value against the training data.

    "auto" applies the default rule (SIGMA_AUTO_FACTOR times the mean 20-NN
    distance); otherwise the value must parse as a positive float.  Returns
    (sigma, bandwidth scale used by the rule).
    """
    scale = mean_knn_distance(data, min(20, data.n - 1))
    if spec == "auto":
        return SIGMA_AUTO_FACTOR * scale, scale
    try:
        sigma = float(spec)
    except ValueError:
        raise DataError(f"--sigma must be 'auto' or a positive number, got {spec!r}") from None
    if sigma <= 0:
        raise DataError(f"--sigma must be positive, got {sigma}")
    return sigma, scale


def cmd_synth(args: argparse.Namespace) -> int:
    if args.preset is not None and args.preset not in dataset.PRESET_NAMES:
        raise DataError(
            f"unknown preset {args.preset!r}; valid presets: {', '.join(dataset.PRESET_NAMES)}"
        )
    if args.preset is None and args.density_config is None:
        raise DataError("either --preset or --density-config is required")
    density = (preset_density(args.preset) if args.preset is not None
               else dataset.load_density_config(args.density_config))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: dict[str, int] = {}
    train = dataset.sample_mixture(density, args.n_train, args.seed)
    save_csv(train, out_dir / "train.csv", include_labels=False)
    written["train.csv"] = train.n
    if args.n_test_nominal > 0:
        nominal = dataset.sample_mixture(density, args.n_test_nominal, args.seed + 1)
        save_csv(nominal, out_dir / "test_nominal.csv", include_labels=False)
        written["test_nominal.csv"] = nominal.n
    if args.n_test_anomaly > 0:
        if density.anomaly_box is None:
            raise DataError("this density has no anomaly box; cannot draw anomalies")
        anomalous = dataset.sample_anomaly_box(density.anomaly_box, args.n_test_anomaly,
                                               args.seed + 2)
        save_csv(anomalous, out_dir / "test_anomaly.csv", include_labels=False)
        written["test_anomaly.csv"] = anomalous.n
    _write_meta(out_dir / "manifest.json",
                _config_echo(args, files=written, density=dataset.density_to_config(density)))
    for name, rows in written.items():
        print(f"wrote {out_dir / name} ({rows} rows)")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    data = load_csv(args.train)
    table = resampled_ranks(data, k=args.k, rounds=args.rounds, seed=args.seed)
    levels = quantize(table.r_values, args.m)
    prefs = make_pairs(levels, max_pairs=args.max_pairs, seed=args.seed)
    if args.cv:
        scale = mean_knn_distance(data, min(20, data.n - 1))
        grid = CvGrid.paper_defaults(scale, folds=args.folds, seed=args.seed)
        result = cross_validate(data, table, args.m, grid, max_pairs=args.max_pairs)
        c_weight, sigma = result.best_c, result.best_sigma
    else:
        c_weight = args.c_weight
        sigma, _ = resolve_sigma(args.sigma, data)
    model = train_ranksvm(data, prefs, KernelConfig(sigma), c_weight)
    state = build_detector(model, data, alpha=args.alpha)
    config = _config_echo(args, resolved_c=c_weight, resolved_sigma=sigma,
                          n_train=data.n, n_pairs=len(prefs))
    save_detector(state, args.model, config=config)
    print(f"trained: support_points={model.n_support} objective={model.objective!r} "
          f"C={c_weight:g} sigma={sigma:g}")
    print(f"wrote {args.model}")
    return EXIT_OK


def _scores_frame(state: DetectorState, data: DataMatrix, alphas: list[float]) -> list[str]:
    values = score_many(state, data.points)
    header = ["index", "score"] + [f"anomaly_{a:g}" for a in alphas]
    lines = [",".join(header)]
    for i, value in enumerate(values):
        cells = [str(i), repr(float(value))] + [str(int(value <= a)) for a in alphas]
        lines.append(",".join(cells))
    return lines


def cmd_score(args: argparse.Namespace) -> int:
    state = load_detector(args.model)
    data = load_csv(args.data, label_column=args.label_column)
    if data.dim != state.dim:
        raise DataError(f"data dimension {data.dim} != model dimension {state.dim}")
    alphas = args.alpha or [state.alpha]
    lines = _scores_frame(state, data, alphas)
    out = Path(args.out)
    out.write_text("\n".join(lines) + "\n")
    _write_meta(out.with_suffix(out.suffix + ".meta.json"),
                _config_echo(args, model_config=read_detector_config(args.model)))
    print(f"wrote {out} ({data.n} rows)")
    return EXIT_OK


def _load_labeled_test(args: argparse.Namespace) -> tuple[DataMatrix, DataMatrix]:
    """Returns (full labeled test set, nominal-only subset)."""
    if args.test is not None:
        if args.label_column is None:
            raise DataError("--test requires --label-column (labels are needed to evaluate)")
        both = load_csv(args.test, label_column=args.label_column)
        if both.labels is None or len(np.unique(both.labels)) < 2:
            raise DataError("evaluation needs both nominal and anomalous test points")
        nominal = both.subset(np.flatnonzero(both.labels == dataset.LABEL_NOMINAL))
        return both, nominal
    if args.test_nominal is None or args.test_anomaly is None:
        raise DataError("provide either --test with --label-column, "
                        "or both --test-nominal and --test-anomaly")
    nominal = load_csv(args.test_nominal)
    anomalous = load_csv(args.test_anomaly)
    points = np.vstack([nominal.points, anomalous.points])
    labels = np.concatenate([np.zeros(nominal.n, dtype=np.int8),
                             np.ones(anomalous.n, dtype=np.int8)])
    return DataMatrix(points, labels), nominal


def cmd_eval(args: argparse.Namespace) -> int:
    state = load_detector(args.model)
    both, nominal = _load_labeled_test(args)
    if both.dim != state.dim:
        raise DataError(f"data dimension {both.dim} != model dimension {state.dim}")
    alphas = args.alpha or [0.01, 0.05, 0.1]
    scores = score_many(state, both.points)
    report = EvalReport(
        auc=auc(scores, both.labels),
        fa_curve=false_alarm_curve(state, nominal, alphas),
        timing=timing_run(state, both) if args.timing else None,
        config=_config_echo(args, model_config=read_detector_config(args.model)),
    )
    Path(args.out).write_text(report.to_text())
    print(f"auc={report.auc!r}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    state = load_detector(args.model)
    if args.bounds is not None:
        xmin, xmax, ymin, ymax = args.bounds
    else:
        if state.dim != 2:
            raise DataError(f"grid export is 2-D only; model dimension is {state.dim}")
        pts = state.model.support_points
        pad = 2.0 * state.model.kernel.sigma
        (xmin, ymin) = pts.min(axis=0) - pad
        (xmax, ymax) = pts.max(axis=0) + pad
    alphas = args.alpha or [state.alpha]
    grid = decision_grid(state, ((xmin, xmax), (ymin, ymax)),
                         resolution=args.grid_res, alphas=alphas)
    out = Path(args.out)
    grid_to_csv(grid, out)
    _write_meta(out.with_suffix(out.suffix + ".meta.json"),
                _config_echo(args, bounds=[xmin, xmax, ymin, ymax],
                             model_config=read_detector_config(args.model)))
    print(f"wrote {out} ({args.grid_res}x{args.grid_res})")
    return EXIT_OK


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise DataError(f"expected a comma-separated list of numbers, got {text!r}") from None
    return values


def cmd_cv_report(args: argparse.Namespace) -> int:
    data = load_csv(args.train)
    table = resampled_ranks(data, k=args.k, rounds=args.rounds, seed=args.seed)
    scale = mean_knn_distance(data, min(20, data.n - 1))
    default = CvGrid.paper_defaults(scale, folds=args.folds, seed=args.seed)
    grid = CvGrid(
        c_values=_parse_floats(args.c_values) if args.c_values else default.c_values,
        sigma_values=_parse_floats(args.sigma_values) if args.sigma_values else default.sigma_values,
        folds=args.folds,
        seed=args.seed,
    )
    result = cross_validate(data, table, args.m, grid, max_pairs=args.max_pairs)
    out = Path(args.out)
    cv_report_to_csv(result, out)
    _write_meta(out.with_suffix(out.suffix + ".meta.json"),
                _config_echo(args, bandwidth_scale=scale))
    print(f"selected C={result.best_c:g} sigma={result.best_sigma:g}")
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="rankad", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate benchmark datasets")
    p.add_argument("--preset", choices=dataset.PRESET_NAMES, default=None)
    p.add_argument("--density-config", default=None, help="JSON mixture definition")
    p.add_argument("--n-train", type=int, default=600)
    p.add_argument("--n-test-nominal", type=int, default=0)
    p.add_argument("--n-test-anomaly", type=int, default=0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a detector from nominal training data")
    p.add_argument("--train", required=True, help="training CSV (nominal points)")
    p.add_argument("--model", required=True, help="output model path")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--rounds", type=int, default=DEFAULT_ROUNDS)
    p.add_argument("--C", dest="c_weight", type=float, default=DEFAULT_C)
    p.add_argument("--sigma", default="auto",
                   help=f"bandwidth, or 'auto' = {SIGMA_AUTO_FACTOR:g} x mean 20-NN distance")
    p.add_argument("--cv", action="store_true", help="select C and sigma by cross-validation")
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--max-pairs", type=int, default=None)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a CSV against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", type=int, default=None)
    p.add_argument("--alpha", type=float, action="append", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="evaluate a model on labeled test data")
    p.add_argument("--model", required=True)
    p.add_argument("--test", default=None, help="labeled test CSV")
    p.add_argument("--label-column", type=int, default=None)
    p.add_argument("--test-nominal", default=None)
    p.add_argument("--test-anomaly", default=None)
    p.add_argument("--alpha", type=float, action="append", default=None)
    p.add_argument("--timing", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="export a 2-D decision grid")
    p.add_argument("--model", required=True)
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"),
                   default=None)
    p.add_argument("--grid-res", type=int, default=200)
    p.add_argument("--alpha", type=float, action="append", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("cv-report", help="cross-validation loss table")
    p.add_argument("--train", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--rounds", type=int, default=DEFAULT_ROUNDS)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--c-values", default=None, help="comma-separated C grid override")
    p.add_argument("--sigma-values", default=None, help="comma-separated sigma grid override")
    p.add_argument("--max-pairs", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except DataError as exc:
        print(f"rankad: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"rankad: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rankad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
