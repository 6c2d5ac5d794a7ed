"""Column- and row-wise fidelity between a real and a synthetic table."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..data.schema import CATEGORICAL, NUMERIC, TableData
from ..errors import ConfigurationError


def kss(real_col, synth_col) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_real(x) - F_synth(x)|."""
    a = np.sort(np.asarray(real_col, dtype=np.float64))
    b = np.sort(np.asarray(synth_col, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ConfigurationError("kss needs two non-empty samples")
    points = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, points, side="right") / a.size
    cdf_b = np.searchsorted(b, points, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def tvd(real_col, synth_col) -> float:
    """Unhalved total variation: sum over categories of |p_real - p_synth|, in [0, 2]."""
    real_col = np.asarray(real_col)
    synth_col = np.asarray(synth_col)
    if real_col.size == 0 or synth_col.size == 0:
        raise ConfigurationError("tvd needs two non-empty columns")
    _, inverse = np.unique(np.concatenate([real_col, synth_col]), return_inverse=True)
    inverse = inverse.reshape(-1)
    k = int(inverse.max()) + 1
    p = np.bincount(inverse[: real_col.size], minlength=k) / real_col.size
    q = np.bincount(inverse[real_col.size:], minlength=k) / synth_col.size
    return float(np.abs(p - q).sum())


def check_compatible(real: TableData, synth: TableData) -> None:
    rs, ss = real.schema, synth.schema
    if [(c.name, c.kind) for c in rs.columns] != [(c.name, c.kind) for c in ss.columns]:
        raise ConfigurationError("real and synthetic tables have different schemas")


def column_values(table: TableData, name: str) -> np.ndarray:
    """Numeric values, or category labels for categorical columns."""
    if table.schema.kind(name) == CATEGORICAL:
        return table.labels(name).astype(str)
    return table.column(name)


@dataclass
class ColumnFidelity:
    scores: dict[str, float]
    mean: float


@dataclass
class RowFidelity:
    scores: dict[tuple[str, str], float]
    mean: float
    excluded_pairs: int = 0  # numeric/categorical mixes
    skipped_pairs: list[tuple[str, str]] = field(default_factory=list)  # undefined correlation


@dataclass
class FidelityReport:
    column: ColumnFidelity
    row: RowFidelity
    score: float


def column_fidelity(real: TableData, synth: TableData) -> ColumnFidelity:
    check_compatible(real, synth)
    scores = {}
    for col in real.schema.columns:
        r, s = column_values(real, col.name), column_values(synth, col.name)
        if col.kind == NUMERIC:
            scores[col.name] = 1.0 - kss(r, s)
        else:
            scores[col.name] = 1.0 - 0.5 * tvd(r, s)
    return ColumnFidelity(scores, float(np.mean(list(scores.values()))))


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    if x.size < 2:
        return None
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.dot(xc, xc)), np.sqrt(np.dot(yc, yc))
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.clip(np.dot(xc, yc) / (sx * sy), -1.0, 1.0))


def _joint_labels(table: TableData, a: str, b: str) -> np.ndarray:
    la, lb = column_values(table, a), column_values(table, b)
    # the separator cannot collide with labels read from CSV text cells
    return np.char.add(np.char.add(la, "\x00"), lb) if la.size else la


def row_fidelity(real: TableData, synth: TableData) -> RowFidelity:
    """Pairwise score over same-kind column pairs.

    Numeric pairs compare Pearson correlations, categorical pairs compare the
    joint category-pair distribution. Mixed pairs are excluded, and numeric
    pairs involving a constant column are skipped with a warning.
    """
    check_compatible(real, synth)
    scores: dict[tuple[str, str], float] = {}
    excluded = 0
    skipped = []
    for ca, cb in combinations(real.schema.columns, 2):
        if ca.kind != cb.kind:
            excluded += 1
            continue
        pair = (ca.name, cb.name)
        if ca.kind == NUMERIC:
            rho_r = _pearson(real.column(ca.name), real.column(cb.name))
            rho_s = _pearson(synth.column(ca.name), synth.column(cb.name))
            if rho_r is None or rho_s is None:
                skipped.append(pair)
                warnings.warn(f"correlation undefined for pair {pair}; skipped", RuntimeWarning)
                continue
            scores[pair] = 1.0 - 0.5 * abs(rho_r - rho_s)
        else:
            scores[pair] = 1.0 - 0.5 * tvd(_joint_labels(real, *pair), _joint_labels(synth, *pair))
    mean = float(np.mean(list(scores.values()))) if scores else float("nan")
    return RowFidelity(scores, mean, excluded, skipped)


def fidelity(real: TableData, synth: TableData) -> FidelityReport:
    """Mean of column and row fidelity; the column mean alone if no pair qualifies."""
    col = column_fidelity(real, synth)
    row = row_fidelity(real, synth)
    score = col.mean if np.isnan(row.mean) else 0.5 * (col.mean + row.mean)
    return FidelityReport(col, row, float(score))
