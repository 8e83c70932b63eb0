"""Handpicked summary statistics and data preprocessing.

Conventions are fixed so that results are reproducible to the bit:
percentiles use linear interpolation between order statistics (numpy's
default, "type 7"), autocovariances divide by M, skewness is m3 / m2^1.5 with
central moments over M.
"""

import numpy as np

from .. import kernels
from .priors import ModelId


def _rows(y):
    y = np.asarray(y, dtype=float)
    return np.atleast_2d(y), y.ndim == 1


def autocov(y, lag):
    """Biased sample autocovariance ``(1/M) sum (y_l - ybar)(y_{l+k} - ybar)``."""
    ys, single = _rows(y)
    m = ys.shape[1]
    if lag >= m:
        raise ValueError(f"series of length {m} is too short for lag {lag}")
    c = ys - ys.mean(axis=1, keepdims=True)
    out = (c[:, : m - lag] * c[:, lag:]).sum(axis=1) / m
    return out[0] if single else out


def skewness(y):
    ys, single = _rows(y)
    c = ys - ys.mean(axis=1, keepdims=True)
    m2 = (c**2).mean(axis=1)
    m3 = (c**3).mean(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(m2 > 0, m3 / np.where(m2 > 0, m2, 1.0) ** 1.5, 0.0)
    return out[0] if single else out


def gandk_summaries(y):
    """Percentiles 20/40/60/80 and skewness."""
    ys, single = _rows(y)
    pct = np.percentile(ys, [20, 40, 60, 80], axis=1).T
    out = np.column_stack([pct, skewness(ys)])
    return out[0] if single else out


def autocov_summaries(y, lags):
    ys, single = _rows(y)
    if ys.shape[1] <= max(lags):
        raise ValueError(f"need M > {max(lags)} for lags {tuple(lags)}, got M={ys.shape[1]}")
    out = np.column_stack([autocov(ys, k) for k in lags])
    return out[0] if single else out


def alpha_summaries(y):
    """Five quantile statistics for stable samples (McCulloch-style).

    [ (q95-q05)/(q75-q25),  (q95+q05-2 q50)/(q95-q05),  q75-q25,  q50,
      q72-q28 ]: a tail-shape ratio for alpha, a skew ratio for beta, two
    scale spreads for gamma and the median for delta.
    """
    ys, single = _rows(y)
    q = np.percentile(ys, [5, 25, 28, 50, 72, 75, 95], axis=1)
    q05, q25, q28, q50, q72, q75, q95 = q
    iqr = q75 - q25
    span = q95 - q05
    with np.errstate(divide="ignore", invalid="ignore"):
        nu_a = np.where(iqr > 0, span / np.where(iqr > 0, iqr, 1.0), 0.0)
        nu_b = np.where(span > 0, (q95 + q05 - 2.0 * q50) / np.where(span > 0, span, 1.0), 0.0)
    out = np.column_stack([nu_a, nu_b, iqr, q50, q72 - q28])
    return out[0] if single else out


def handpicked_summaries(model, y):
    model = ModelId.parse(model)
    if model is ModelId.GANDK:
        return gandk_summaries(y)
    if model is ModelId.ALPHA_STABLE:
        return alpha_summaries(y)
    if model is ModelId.AR2:
        return autocov_summaries(y, (1, 2, 3, 4, 5))
    return autocov_summaries(y, (1, 2))


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------


def clean_outliers(y, rng, lo=-10.0, hi=50.0):
    """Replace values outside ``[lo, hi]`` by uniform draws on the in-range span.

    The span is ``[min, max]`` of the in-range values of the same series, so
    replacements never widen the data range.  Rows without outliers consume
    no randomness, which makes the operation idempotent.
    """
    ys, single = _rows(y)
    ys = ys.copy()
    bad = (ys < lo) | (ys > hi) | ~np.isfinite(ys)
    if not bad.any():
        return ys[0] if single else ys
    rows = np.flatnonzero(bad.any(axis=1))
    for r in rows:
        good = ys[r, ~bad[r]]
        if good.size == 0:
            raise ValueError(f"row {r}: every value lies outside [{lo}, {hi}]")
        idx = np.flatnonzero(bad[r])
        ys[r, idx] = rng.uniform(good.min(), good.max(), idx.size)
    return ys[0] if single else ys


def robust_scale(y, convention="paper"):
    """Scale by the interquartile range.

    ``convention="paper"`` computes ``(y + Q1) / (Q3 - Q1)``; ``"centered"``
    computes the usual ``(y - Q1) / (Q3 - Q1)``.  Returns ``(scaled, q1, q3)``
    where q1/q3 are scalars for a single series and (n,) arrays for a batch.
    """
    if convention not in ("paper", "centered"):
        raise ValueError(f"unknown robust-scale convention {convention!r}")
    ys, single = _rows(y)
    q1, q3 = np.percentile(ys, [25, 75], axis=1)
    spread = q3 - q1
    if np.any(spread <= 0):
        i = int(np.flatnonzero(spread <= 0)[0])
        raise ValueError(f"row {i}: degenerate spread, Q3 == Q1")
    shift = q1 if convention == "paper" else -q1
    scaled = (ys + shift[:, None]) / spread[:, None]
    if single:
        return scaled[0], float(q1[0]), float(q3[0])
    return scaled, q1, q3


def ecdf_grid(lo, hi, n=100):
    return np.linspace(lo, hi, n)


def ecdf_features(y, grid):
    """Empirical CDF ``#{y_i <= g_j} / M`` evaluated on an increasing grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    ys, single = _rows(y)
    out = kernels.ecdf_rows(ys, grid)
    return out[0] if single else out
