from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.schema import NUMERIC, TableData
from ..errors import ConfigurationError
from .fidelity import check_compatible, column_values


@dataclass
class CoverageReport:
    scores: dict[str, float]
    score: float
    degenerate_columns: list[str] = field(default_factory=list)


def range_coverage(real_col, synth_col) -> tuple[float, bool]:
    """Range-overlap score for a numeric column; second item flags a zero real range."""
    r = np.asarray(real_col, dtype=np.float64)
    s = np.asarray(synth_col, dtype=np.float64)
    lo, hi = r.min(), r.max()
    if hi == lo:
        return (1.0 if np.any(s == lo) else 0.0), True
    tau = (s.min() - lo) / (hi - lo)
    chi = (hi - s.max()) / (hi - lo)
    gamma = 1.0 - (max(tau, 0.0) + max(chi, 0.0))
    return float(np.clip(gamma, 0.0, 1.0)), False


def category_coverage(real_col, synth_col) -> float:
    real_cats = set(np.asarray(real_col).tolist())
    synth_cats = set(np.asarray(synth_col).tolist())
    return len(real_cats & synth_cats) / len(real_cats)


def coverage(real: TableData, synth: TableData) -> CoverageReport:
    check_compatible(real, synth)
    if real.n_rows == 0 or synth.n_rows == 0:
        raise ConfigurationError("coverage needs non-empty tables")
    scores = {}
    degenerate = []
    for col in real.schema.columns:
        r, s = column_values(real, col.name), column_values(synth, col.name)
        if col.kind == NUMERIC:
            scores[col.name], flat = range_coverage(r, s)
            if flat:
                degenerate.append(col.name)
        else:
            scores[col.name] = category_coverage(r, s)
    return CoverageReport(scores, float(np.mean(list(scores.values()))), degenerate)
