"""Reference-table ABC rejection sampling."""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .models import ModelId, get_model

# Rows simulated per derived random stream.  Fixing the chunk size makes a
# table a deterministic function of (seed, n) and makes prefixes agree:
# the first n rows of a larger table equal a table of size n.
TABLE_CHUNK = 1000


@dataclass(frozen=True)
class ReferenceTable:
    model: ModelId
    theta: np.ndarray  # (n, p)
    series: np.ndarray  # (n, M)
    summaries: Optional[np.ndarray] = None  # (n, s)

    def __post_init__(self):
        if self.theta.shape[0] != self.series.shape[0]:
            raise ValueError("theta and series must have the same number of rows")
        if self.summaries is not None and self.summaries.shape[0] != self.theta.shape[0]:
            raise ValueError("summaries must be parallel to the table entries")

    @property
    def n_tilde(self):
        return self.theta.shape[0]

    @property
    def M(self):
        return self.series.shape[1]

    def head(self, n):
        s = None if self.summaries is None else self.summaries[:n]
        return ReferenceTable(self.model, self.theta[:n], self.series[:n], s)


@dataclass(frozen=True)
class AbcConfig:
    n_tilde: int
    percentile_x: float
    metric_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.n_tilde < 1:
            raise ValueError("n_tilde must be at least 1")
        if not 0.0 < self.percentile_x < 100.0:
            raise ValueError("percentile_x must lie in (0, 100)")
        if self.metric_weights is not None and min(self.metric_weights) <= 0:
            raise ValueError("metric weights must be positive")


@dataclass(frozen=True)
class PosteriorSample:
    draws: np.ndarray  # (k, p)
    source: str = "abc"  # "abc" or "reference"
    distances: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.draws.shape[0]

    def mean(self):
        return self.draws.mean(axis=0)


def stream(seed, *keys):
    """Independent generator for ``(seed, *keys)``; keys are small non-negative ints."""
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def simulate_pairs(model, n, seed, tag=0, M=None, start=0):
    """``n`` prior draws and simulated series, chunked over derived streams.

    Row ``i`` depends only on ``(seed, tag, i // TABLE_CHUNK)``; ``start`` lets
    callers generate any slice of the same sequence.
    """
    bm = get_model(model)
    if n < 1:
        raise ValueError("need at least one pair")
    M = bm.M if M is None else M
    theta = np.empty((n, bm.n_params))
    ys = np.empty((n, M))
    pos = start
    while pos < start + n:
        c = pos // TABLE_CHUNK
        rng = stream(seed, tag, c)
        th = bm.sample_prior(rng, TABLE_CHUNK)
        try:
            block = bm.simulate(th, rng, M)
        except ValueError as exc:
            raise RuntimeError(f"simulator failed in rows {c * TABLE_CHUNK}..: {exc}") from exc
        lo = pos - c * TABLE_CHUNK
        hi = min(TABLE_CHUNK, start + n - c * TABLE_CHUNK)
        out = slice(pos - start, pos - start + hi - lo)
        theta[out] = th[lo:hi]
        ys[out] = block[lo:hi]
        pos += hi - lo
    return theta, ys


def build_reference_table(model, n_tilde, seed, M=None, tag=0):
    """Reference table of ``n_tilde`` i.i.d. (theta, y) pairs from the prior predictive."""
    theta, ys = simulate_pairs(model, n_tilde, seed, tag=tag, M=M)
    return ReferenceTable(ModelId.parse(model), theta, ys)


def summarize_table(table, summary_fn, batched=True, chunk=2000):
    """Attach ``summary_fn(series)`` to every entry.

    With ``batched=True`` the function receives (n, M) blocks and must return
    (n, s); otherwise it is applied one series at a time.  The entries are
    shared, not copied, so several summary methods see identical data.
    """
    if batched:
        parts = [summary_fn(table.series[i : i + chunk]) for i in range(0, table.n_tilde, chunk)]
        s = np.concatenate([np.atleast_2d(np.asarray(p, dtype=float)) for p in parts])
    else:
        s = np.array([np.atleast_1d(summary_fn(y)) for y in table.series], dtype=float)
    if s.shape[0] != table.n_tilde:
        raise ValueError("summary function returned the wrong number of rows")
    bad = ~np.all(np.isfinite(s), axis=1)
    if bad.any():
        raise ValueError(f"non-finite summary at table index {int(np.flatnonzero(bad)[0])}")
    return replace(table, summaries=s)


def mahalanobis(s_star, s_obs, diag_weights=None):
    """``sqrt((s*-s)^T A (s*-s))`` with ``A = diag(1/w^2)``, or identity if no weights.

    ``s_star`` may be a single vector or an (n, s) block.
    """
    s_star = np.asarray(s_star, dtype=float)
    s_obs = np.asarray(s_obs, dtype=float)
    if s_star.shape[-1] != s_obs.shape[-1]:
        raise ValueError(f"summary lengths differ: {s_star.shape[-1]} vs {s_obs.shape[-1]}")
    diff = s_star - s_obs
    if diag_weights is not None:
        w = np.asarray(diag_weights, dtype=float)
        if w.shape != (s_obs.shape[-1],):
            raise ValueError("one weight per summary is required")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        diff = diff / w
    return np.sqrt((diff**2).sum(axis=-1))


def retention_count(n_tilde, percentile_x):
    """``floor(n_tilde * x / 100)``, guarded against binary rounding of x."""
    return int(math.floor(n_tilde * percentile_x / 100.0 + 1e-9))


def rejection_sample(table, s_obs, percentile_x, diag_weights=None, n_keep=None, chunk=50_000):
    """Keep the ``floor(N x / 100)`` entries with the smallest distances.

    Ties are broken by table index.  Distances are computed chunk by chunk and
    only a running top-k is kept in memory.  ``n_keep`` overrides the count.
    """
    if table.summaries is None:
        raise ValueError("summarize the table first")
    if not 0.0 < percentile_x < 100.0:
        raise ValueError("percentile_x must lie in (0, 100)")
    k = retention_count(table.n_tilde, percentile_x) if n_keep is None else int(n_keep)
    if k < 1:
        raise ValueError(
            f"percentile {percentile_x} of {table.n_tilde} entries retains nothing; "
            "increase x or the table size"
        )
    best_d = np.empty(0)
    best_i = np.empty(0, dtype=np.int64)
    for start in range(0, table.n_tilde, chunk):
        d = mahalanobis(table.summaries[start : start + chunk], s_obs, diag_weights)
        idx = np.arange(start, start + d.shape[0])
        cand_d = np.concatenate([best_d, d])
        cand_i = np.concatenate([best_i, idx])
        order = np.lexsort((cand_i, cand_d))[:k]
        best_d, best_i = cand_d[order], cand_i[order]
    return PosteriorSample(table.theta[best_i], "abc", best_d, best_i)


def write_posterior_csv(path, sample):
    p = sample.draws.shape[1]
    header = ",".join([f"theta_{j + 1}" for j in range(p)] + ["distance"])
    dist = sample.distances if sample.distances is not None else np.full(sample.n, np.nan)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row, dv in zip(sample.draws, dist):
            fh.write(",".join(repr(float(v)) for v in (*row, dv)) + "\n")


def read_posterior_csv(path, source="abc"):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PosteriorSample(data[:, :-1], source, data[:, -1])
