"""Distance to closest record (DCR)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..data.quantile import fit_quantile
from ..data.schema import NUMERIC, TableData
from ..errors import ConfigurationError
from .fidelity import check_compatible, column_values


@dataclass
class DcrResult:
    median: float
    n_synthetic_used: int
    subsampled: bool


def dcr_features(real: TableData, synth: TableData) -> tuple[np.ndarray, np.ndarray]:
    """Map both tables into the space DCR is measured in.

    Numerics become normal scores under a quantile transform fitted on the
    real table; a column whose transform is degenerate (constant real column)
    keeps its raw values. Categoricals become one-hot vectors over the union
    of labels in both tables.
    """
    qt = fit_quantile(real)
    r_blocks, s_blocks = [], []
    for col in real.schema.columns:
        if col.kind == NUMERIC:
            r_raw, s_raw = real.column(col.name), synth.column(col.name)
            if qt.is_constant(col.name):
                r_blocks.append(r_raw[:, None])
                s_blocks.append(s_raw[:, None])
            else:
                r_blocks.append(np.atleast_1d(qt.apply(r_raw, col.name))[:, None])
                s_blocks.append(np.atleast_1d(qt.apply(s_raw, col.name))[:, None])
        else:
            r_lab, s_lab = column_values(real, col.name), column_values(synth, col.name)
            cats = np.unique(np.concatenate([r_lab, s_lab]))
            r_blocks.append((r_lab[:, None] == cats[None, :]).astype(np.float64))
            s_blocks.append((s_lab[:, None] == cats[None, :]).astype(np.float64))
    return np.hstack(r_blocks), np.hstack(s_blocks)


def privacy_dcr(real: TableData, synth: TableData, max_pairs: int = 10_000_000,
                seed: int = 0) -> DcrResult:
    """Median over synthetic rows of the Euclidean distance to the nearest real row.

    When ``|synth| * |real|`` exceeds ``max_pairs`` only a seeded subsample of
    ``max_pairs // |real|`` synthetic rows is scored.
    """
    check_compatible(real, synth)
    if real.n_rows == 0 or synth.n_rows == 0:
        raise ConfigurationError("DCR needs non-empty tables")
    r_feat, s_feat = dcr_features(real, synth)
    n_used = synth.n_rows
    subsampled = synth.n_rows * real.n_rows > max_pairs
    if subsampled:
        n_used = max(1, max_pairs // real.n_rows)
        keep = np.sort(np.random.default_rng(seed).choice(synth.n_rows, n_used, replace=False))
        s_feat = s_feat[keep]
    distances, _ = cKDTree(r_feat).query(s_feat, k=1)
    return DcrResult(float(np.median(distances)), int(n_used), bool(subsampled))
