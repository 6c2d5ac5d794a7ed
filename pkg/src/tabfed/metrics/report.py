"""Metric bundle, JSON serialization and the cross-subset heatmap grid."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data.schema import TableData
from .coverage import coverage
from .fidelity import fidelity
from .privacy import privacy_dcr
from .utility import ALL_CLASSIFIERS, utility

HEATMAP_METRICS = ("fidelity", "privacy", "coverage")


@dataclass
class MetricReport:
    fidelity: float
    column_fidelity: float
    row_fidelity: float
    coverage: float
    privacy_dcr: float
    utility: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {
            "fidelity": self.fidelity,
            "column_fidelity": self.column_fidelity,
            "row_fidelity": self.row_fidelity,
            "coverage": self.coverage,
            "privacy_dcr": self.privacy_dcr,
        }
        if self.utility is not None:
            doc["utility"] = self.utility
        doc["details"] = self.details
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    def table_row(self) -> str:
        util = "-" if self.utility is None else f"{self.utility:.3f}"
        return (f"fidelity {self.fidelity:.3f} | utility {util} | "
                f"coverage {self.coverage:.3f} | privacy {self.privacy_dcr:.3f}")


def evaluate(real: TableData, synth: TableData, label_column: str | None = None,
             with_utility: bool = True, max_pairs: int = 10_000_000, seed: int = 0,
             classifiers=ALL_CLASSIFIERS) -> MetricReport:
    """All four metrics of ``synth`` against ``real``.

    Utility needs a label column; it falls back to the schema's label column,
    then to its split column, and is omitted when none is available.
    """
    synth = synth.with_vocab_of(real)
    fid = fidelity(real, synth)
    cov = coverage(real, synth)
    dcr = privacy_dcr(real, synth, max_pairs=max_pairs, seed=seed)
    details = {
        "column_scores": fid.column.scores,
        "row_scores": {f"{a}|{b}": v for (a, b), v in fid.row.scores.items()},
        "row_excluded_pairs": fid.row.excluded_pairs,
        "row_skipped_pairs": [f"{a}|{b}" for a, b in fid.row.skipped_pairs],
        "coverage_scores": cov.scores,
        "coverage_degenerate_columns": cov.degenerate_columns,
        "dcr_synthetic_rows_used": dcr.n_synthetic_used,
        "dcr_subsampled": dcr.subsampled,
        "n_real": real.n_rows,
        "n_synthetic": synth.n_rows,
    }
    report = MetricReport(fid.score, fid.column.mean, fid.row.mean, cov.score, dcr.median,
                          details=details)
    label = label_column or real.schema.label_column or real.schema.split_column
    if with_utility and label is not None:
        util = utility(synth, real, label, classifiers=classifiers, seed=seed)
        report.utility = util.score
        details["utility_label_column"] = label
        details["utility_accuracies"] = util.accuracies
        details["utility_warnings"] = util.warnings
    return report


def heatmap_eval(synthetic: Sequence[TableData], subsets: Sequence[TableData],
                 metrics: Sequence[str] = HEATMAP_METRICS, max_pairs: int = 10_000_000,
                 seed: int = 0) -> dict[str, np.ndarray]:
    """Score every model's synthetic table against every client subset.

    Returns one ``(n_models, n_subsets)`` matrix per metric.
    """
    out = {m: np.zeros((len(synthetic), len(subsets))) for m in metrics}
    for i, synth in enumerate(synthetic):
        for j, real in enumerate(subsets):
            s = synth.with_vocab_of(real)
            if "fidelity" in out:
                out["fidelity"][i, j] = fidelity(real, s).score
            if "coverage" in out:
                out["coverage"][i, j] = coverage(real, s).score
            if "privacy" in out:
                out["privacy"][i, j] = privacy_dcr(real, s, max_pairs=max_pairs, seed=seed).median
    return out


def write_heatmap_csv(path, matrix: np.ndarray, row_names: Sequence[str],
                      col_names: Sequence[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["model"] + list(col_names))
        for name, row in zip(row_names, matrix):
            writer.writerow([name] + [repr(float(v)) for v in row])
