"""Rank-based anomaly detection.

Score nominal training data by average K-NN distance, distill the induced
ordering into a compact radial-basis kernel ranker via pairwise max-margin
learning, and flag test points whose predicted rank falls in the lowest
alpha-fraction of the training scores.
"""

from .dataset import (DataError, DataMatrix, MixtureComponent, MixtureDensity,
                      load_csv, load_density_config, preset_density, sample_anomaly_box,
                      sample_mixture, save_csv, split)
from .detector import (DecisionGrid, DetectorState, build_detector, decide, decision_grid,
                       grid_to_csv, load_detector, save_detector, score, score_many)
from .evaluation import (EvalReport, TimingRecord, auc, bayes_auc, false_alarm_curve,
                         oracle_pvalue, oracle_pvalues, timing_run)
from .knn_score import (KnnScoreTable, avg_knn_distance, avg_knn_distances, plain_ranks,
                        rank_score, rank_scores, resampled_query_ranks, resampled_ranks,
                        score_table_to_csv)
from .model_selection import (CvGrid, CvResult, cross_validate, cv_report_to_csv,
                              mean_knn_distance, wpdl)
from .ranker import (KernelConfig, PreferenceSet, RankModel, SolverError, SolverOptions,
                     evaluate, evaluate_many, make_pairs, quantize, rbf_kernel, train_ranksvm)

__version__ = "0.1.0"

__all__ = [
    "DataError", "DataMatrix", "MixtureComponent", "MixtureDensity",
    "load_csv", "load_density_config", "preset_density", "sample_anomaly_box",
    "sample_mixture", "save_csv", "split",
    "DecisionGrid", "DetectorState", "build_detector", "decide", "decision_grid",
    "grid_to_csv", "load_detector", "save_detector", "score", "score_many",
    "EvalReport", "TimingRecord", "auc", "bayes_auc", "false_alarm_curve",
    "oracle_pvalue", "oracle_pvalues", "timing_run",
    "KnnScoreTable", "avg_knn_distance", "avg_knn_distances", "plain_ranks",
    "rank_score", "rank_scores", "resampled_query_ranks", "resampled_ranks",
    "score_table_to_csv",
    "CvGrid", "CvResult", "cross_validate", "cv_report_to_csv",
    "mean_knn_distance", "wpdl",
    "KernelConfig", "PreferenceSet", "RankModel", "SolverError", "SolverOptions",
    "evaluate", "evaluate_many", "make_pairs", "quantize", "rbf_kernel", "train_ranksvm",
    "__version__",
]
