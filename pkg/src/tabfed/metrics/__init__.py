from .coverage import CoverageReport, category_coverage, coverage, range_coverage
from .fidelity import (
    ColumnFidelity,
    FidelityReport,
    RowFidelity,
    column_fidelity,
    fidelity,
    kss,
    row_fidelity,
    tvd,
)
from .privacy import DcrResult, dcr_features, privacy_dcr
from .report import HEATMAP_METRICS, MetricReport, evaluate, heatmap_eval, write_heatmap_csv
from .utility import ALL_CLASSIFIERS, ClassifierKind, MixedNaiveBayes, UtilityReport, utility

__all__ = [
    "ALL_CLASSIFIERS", "ClassifierKind", "ColumnFidelity", "CoverageReport", "DcrResult",
    "FidelityReport", "HEATMAP_METRICS", "MetricReport", "MixedNaiveBayes", "RowFidelity",
    "UtilityReport", "category_coverage", "column_fidelity", "coverage", "dcr_features",
    "evaluate", "fidelity", "heatmap_eval", "kss", "privacy_dcr", "range_coverage",
    "row_fidelity", "tvd", "utility", "write_heatmap_csv",
]
