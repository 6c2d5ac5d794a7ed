"""Empirical-CDF quantile transform with standard-normal output.

Follows the conventions of scikit-learn's ``QuantileTransformer`` with
``output_distribution="normal"``: reference quantiles are linearly interpolated
percentiles on an even probability grid, repeated knots are handled by
averaging the ascending and descending interpolations, and CDF values are
clipped to ``[eps, 1 - eps]`` before the normal quantile function.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import DataLoadError
from .schema import TableData

CLIP_EPS = 1e-7


@dataclass
class QuantileTransform:
    knots: dict[str, np.ndarray] = field(default_factory=dict)
    eps: float = CLIP_EPS

    @property
    def columns(self) -> list[str]:
        return list(self.knots)

    def _knots(self, column: str) -> np.ndarray:
        try:
            return self.knots[column]
        except KeyError:
            raise DataLoadError(f"no quantile transform fitted for column {column!r}") from None

    def is_constant(self, column: str) -> bool:
        q = self._knots(column)
        return bool(q[0] == q[-1])

    def cdf(self, value, column: str) -> np.ndarray:
        """Empirical CDF position in [0, 1] (before clipping)."""
        q = self._knots(column)
        x = np.asarray(value, dtype=np.float64)
        if q[0] == q[-1]:
            return np.full_like(x, 0.5)
        refs = np.linspace(0.0, 1.0, q.size)
        u = 0.5 * (np.interp(x, q, refs) - np.interp(-x, -q[::-1], -refs[::-1]))
        u = np.where(x <= q[0], 0.0, u)
        return np.where(x >= q[-1], 1.0, u)

    def apply(self, value, column: str):
        """Map raw values to standard-normal scores; constant columns map to 0."""
        x = np.asarray(value, dtype=np.float64)
        if self.is_constant(column):
            out = np.zeros_like(x)
        else:
            u = np.clip(self.cdf(x, column), self.eps, 1.0 - self.eps)
            out = ndtri(u)
        return float(out) if out.ndim == 0 else out

    def invert(self, score, column: str):
        """Map normal scores back to raw values, clamped to the knot range."""
        q = self._knots(column)
        z = np.asarray(score, dtype=np.float64)
        if q[0] == q[-1]:
            out = np.full_like(z, q[0])
        else:
            u = ndtr(z)
            refs = np.linspace(0.0, 1.0, q.size)
            out = np.interp(u, refs, q)
            # the clip band maps onto the extreme knots exactly
            band = self.eps * (1.0 + 1e-6)
            out = np.where(u <= band, q[0], out)
            out = np.where(u >= 1.0 - band, q[-1], out)
        return float(out) if out.ndim == 0 else out


def _linear_quantiles(values: np.ndarray, n_q: int) -> np.ndarray:
    # same as np.percentile(..., method="linear") but exact at integer positions
    s = np.sort(values)
    pos = np.linspace(0.0, s.size - 1, n_q)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, s.size - 1)
    frac = pos - lo
    knots = np.where(frac == 0.0, s[lo], s[lo] + frac * (s[hi] - s[lo]))
    return np.maximum.accumulate(knots)


def fit_quantile(data: TableData, n_quantiles: int = 1000, rows=None) -> QuantileTransform:
    """Fit reference quantiles for every numeric column.

    ``rows`` optionally restricts fitting to a subset of row indices (the
    training rows). At most ``min(n_quantiles, N)`` knots are stored.
    """
    if n_quantiles < 2:
        raise DataLoadError("n_quantiles must be at least 2")
    table = data if rows is None else data.subset(rows)
    transform = QuantileTransform()
    for name in table.schema.numeric_columns:
        values = table.column(name)
        if values.size == 0:
            raise DataLoadError(f"cannot fit quantiles on empty column {name!r}")
        transform.knots[name] = _linear_quantiles(values, max(min(n_quantiles, values.size), 2))
    return transform


def quantile_apply(qt: QuantileTransform, value, column: str):
    return qt.apply(value, column)


def quantile_invert(qt: QuantileTransform, score, column: str):
    return qt.invert(score, column)
