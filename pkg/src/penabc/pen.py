"""Partially exchangeable networks (PEN-d).

A PEN-d maps a series ``y`` of length M to::

    outer([y_1..y_d,  sum_{i=1}^{M-d} inner(y_i..y_{i+d}),  extras])

The inner network sees every overlapping window of d+1 consecutive values,
the window outputs are sum-pooled, and the outer network also receives the
first d values and optional side features.  Such a function is unchanged by
any d-block-switch transformation of ``y``; d = 0 gives a DeepSets network.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels, nn
from .nn import LINEAR, RELU, Layer, MlpSpec


POOLINGS = ("sum", "mean")


@dataclass(frozen=True)
class PenSpec:
    d: int
    inner: MlpSpec
    outer: MlpSpec
    extra_dim: int = 0
    # "sum" pools as written in the decomposition; "mean" divides by the
    # window count, which only rescales the outer network's first layer
    pooling: str = "sum"

    def __post_init__(self):
        if self.d < 0 or self.extra_dim < 0:
            raise ValueError("d and extra_dim must be non-negative")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.inner.in_dim != self.d + 1:
            raise ValueError(f"inner network input must be d+1 = {self.d + 1}")
        want = self.d + self.latent_dim + self.extra_dim
        if self.outer.in_dim != want:
            raise ValueError(
                f"outer network input must be d + latent + extra = {want}, got {self.outer.in_dim}"
            )

    @property
    def latent_dim(self):
        return self.inner.out_dim

    @property
    def out_dim(self):
        return self.outer.out_dim


class PenWeights(NamedTuple):
    inner: list
    outer: list


def init_pen_weights(spec, rng):
    return PenWeights(nn.init_weights(spec.inner, rng), nn.init_weights(spec.outer, rng))


def windows(y, d):
    """All M-d overlapping windows ``(y_i, ..., y_{i+d})``; shape (M-d, d+1).

    Accepts a batch (n, M) too, giving (n, M-d, d+1).  The result is a
    read-only view.
    """
    y = np.asarray(y, dtype=float)
    m = y.shape[-1]
    if m <= d:
        raise ValueError(f"series length {m} must exceed d = {d}")
    return sliding_window_view(y, d + 1, axis=-1)[..., : m - d, :]


def _pool(latent, canonical):
    if canonical:
        # summing in sorted order makes the result a function of the multiset
        latent = np.sort(latent, axis=1)
    return kernels.kahan_pool(latent)


def pen_forward(spec, w, y, extras=None, canonical=False):
    """PEN forward pass over a single series (M,) or a batch (n, M).

    Returns ``(prediction, cache)``.  With ``canonical=True`` the window
    latents are sorted per coordinate before pooling, so any reordering of the
    windows gives a bit-identical pooled vector.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    ys = np.atleast_2d(y)
    n, m = ys.shape
    if m <= spec.d:
        raise ValueError(f"series length {m} must exceed d = {spec.d}")
    if spec.extra_dim:
        if extras is None:
            raise ValueError(f"this PEN expects {spec.extra_dim} extra features")
        ex = np.atleast_2d(np.asarray(extras, dtype=float))
        if ex.shape != (n, spec.extra_dim):
            raise ValueError(f"extras must have shape ({n}, {spec.extra_dim}), got {ex.shape}")
    elif extras is not None and np.size(extras):
        raise ValueError("this PEN takes no extra features")
    n_win = m - spec.d
    win = windows(ys, spec.d).reshape(n * n_win, spec.d + 1)
    latent, inner_cache = nn.forward(spec.inner, w.inner, win)
    pooled = _pool(latent.reshape(n, n_win, spec.latent_dim), canonical)
    if spec.pooling == "mean":
        pooled /= n_win
    parts = [ys[:, : spec.d], pooled]
    if spec.extra_dim:
        parts.append(ex)
    z = np.concatenate(parts, axis=1)
    out, outer_cache = nn.forward(spec.outer, w.outer, z)
    cache = {
        "inner": inner_cache,
        "outer": outer_cache,
        "n": n,
        "n_win": n_win,
        "single": single,
    }
    return (out[0] if single else out), cache


def pen_predict(spec, w, y, extras=None, chunk=256, canonical=False):
    """Batched forward pass without caches, in chunks of ``chunk`` series."""
    ys = np.atleast_2d(np.asarray(y, dtype=float))
    ex = None if extras is None else np.atleast_2d(extras)
    out = []
    for i in range(0, ys.shape[0], chunk):
        e = None if ex is None else ex[i : i + chunk]
        out.append(pen_forward(spec, w, ys[i : i + chunk], e, canonical)[0])
    out = np.concatenate(out)
    return out[0] if np.asarray(y).ndim == 1 else out


def pen_backward(spec, w, cache, grad_out):
    """Gradients of the loss with respect to the inner and outer weights.

    Every window receives the same upstream gradient from the pooled sum, so
    the inner gradient is the sum of the per-window contributions.
    """
    g = np.atleast_2d(np.asarray(grad_out, dtype=float))
    n, n_win = cache["n"], cache["n_win"]
    if g.shape != (n, spec.out_dim):
        raise ValueError(f"grad_out must have shape ({n}, {spec.out_dim}), got {g.shape}")
    outer_grads, g_z = nn.backward(spec.outer, w.outer, cache["outer"], g)
    g_pool = g_z[:, spec.d : spec.d + spec.latent_dim]
    if spec.pooling == "mean":
        g_pool = g_pool / n_win
    g_latent = np.broadcast_to(
        g_pool[:, None, :], (n, n_win, spec.latent_dim)
    ).reshape(n * n_win, spec.latent_dim)
    inner_grads, _ = nn.backward(spec.inner, w.inner, cache["inner"], g_latent, input_grad=False)
    return PenWeights(inner_grads, outer_grads)


class PenNetwork:
    """Adapter giving a PEN the interface :func:`penabc.nn.train` expects.

    Inputs are ``(series, extras)`` tuples; ``extras`` may be ``None``.
    """

    def __init__(self, spec):
        self.spec = spec

    def init(self, rng):
        return init_pen_weights(self.spec, rng)

    def predict(self, params, inputs):
        y, ex = inputs
        return pen_predict(self.spec, params, y, ex)

    def loss_and_grad(self, params, inputs, targets):
        y, ex = inputs
        pred, cache = pen_forward(self.spec, params, y, ex)
        loss, g = nn.mse_loss(pred, targets)
        return loss, pen_backward(self.spec, params, cache, g)


# --------------------------------------------------------------------------
# block-switch transformations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSwitch:
    """Indices (i, j, k, l), 1-based and inclusive, of the two blocks y_i..y_j and y_k..y_l."""

    i: int
    j: int
    k: int
    l: int
    d: int

    def validate(self, m):
        i, j, k, l, d = self.i, self.j, self.k, self.l, self.d
        if not (1 <= i <= j < k <= l <= m):
            raise ValueError(f"need 1 <= i <= j < k <= l <= M, got {(i, j, k, l)} with M={m}")
        if j - i < d or l - k < d:
            raise ValueError("each block must span at least d+1 values")


def block_switch(y, d, b):
    """Apply the d-block-switch transformation ``b`` to ``y``.

    The blocks are interchanged only when they start with the same d values
    and end with the same d values; otherwise ``y`` is returned unchanged.
    For d = 0 the guards are vacuous and any two blocks may be swapped.
    """
    y = np.asarray(y)
    b = b if isinstance(b, BlockSwitch) else BlockSwitch(*b, d=d)
    if b.d != d:
        raise ValueError("block-switch order does not match d")
    b.validate(y.shape[0])
    i, j, k, l = b.i - 1, b.j - 1, b.k - 1, b.l - 1
    heads = np.array_equal(y[i : i + d], y[k : k + d])
    tails = np.array_equal(y[j + 1 - d : j + 1], y[l + 1 - d : l + 1])
    if not (heads and tails):
        return y.copy()
    return np.concatenate([y[:i], y[k : l + 1], y[j + 1 : k], y[i : j + 1], y[l + 1 :]])


def plant_block_switch(m, d, rng, alphabet=None):
    """Random series of length ``m`` plus a block switch that is guaranteed to apply.

    Both blocks get at least 2d+1 values so their d-value heads and tails do
    not overlap and one interior value stays free, which keeps the swap from
    being the identity.  The second block's head and tail are then
    overwritten with the first block's.  ``alphabet``, if given, is a small set of values to draw
    from, which adds coincidental repeats.
    """
    w = 2 * d + 1
    if m < 2 * w:
        raise ValueError(f"need M >= {2 * w} to plant a {d}-block switch, got {m}")
    if alphabet is None:
        y = rng.standard_normal(m)
    else:
        y = rng.choice(np.asarray(alphabet, dtype=float), size=m)
    len1 = int(rng.integers(w, m - w + 1))
    len2 = int(rng.integers(w, m - len1 + 1))
    slack = m - len1 - len2
    a, b = np.sort(rng.integers(0, slack + 1, size=2))
    i0 = int(a)
    k0 = i0 + len1 + int(b - a)
    j0 = i0 + len1 - 1
    l0 = k0 + len2 - 1
    if d:
        y[k0 : k0 + d] = y[i0 : i0 + d]
        y[l0 + 1 - d : l0 + 1] = y[j0 + 1 - d : j0 + 1]
    return y, BlockSwitch(i0 + 1, j0 + 1, k0 + 1, l0 + 1, d)


@dataclass
class InvarianceReport:
    trials: int
    applied: int
    max_rel_discrepancy: float

    def passes(self, tol):
        return self.max_rel_discrepancy <= tol


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def is_d_block_switch_invariant(f, d, trials, rng, m=60, alphabet=None):
    """Empirically test ``f`` against planted d-block-switch transformations.

    Each trial builds a series with a guaranteed-applicable switch, transforms
    it and records ``max|f(y) - f(T y)| / max(|f(y)|, |f(T y)|)``.
    """
    worst = 0.0
    applied = 0
    for _ in range(trials):
        y, b = plant_block_switch(m, d, rng, alphabet)
        ty = block_switch(y, d, b)
        if not np.array_equal(ty, y):
            applied += 1
        worst = max(worst, _rel(f(y), f(ty)))
    return InvarianceReport(trials, applied, worst)


def permutation_discrepancy(f, m, trials, rng):
    """Worst relative change of ``f`` under random permutations of random series."""
    worst = 0.0
    for _ in range(trials):
        y = rng.standard_normal(m)
        worst = max(worst, _rel(f(y), f(rng.permutation(y))))
    return worst


# --------------------------------------------------------------------------
# built-in architectures
# --------------------------------------------------------------------------


def _mlp(dims, last=LINEAR):
    return MlpSpec.from_dims(dims, output=last)


def _inner(dims, last=LINEAR):
    return _mlp(dims, last)


PRESETS = {
    # g-and-k, M = 1000
    "gk-mlp-small": _mlp([1000, 25, 25, 12, 4]),
    "gk-mlp-large": _mlp([1000, 100, 100, 50, 4]),
    "gk-mlp-pre": _mlp([100, 100, 100, 50, 4]),
    "gk-pen0": PenSpec(0, _inner([1, 100, 50, 10]), _mlp([10, 100, 100, 50, 4])),
    # alpha-stable: robust-scaled series plus (Q1, Q3)
    "alpha-mlp-small": _mlp([1002, 25, 25, 12, 4]),
    "alpha-mlp-large": _mlp([1002, 100, 100, 50, 4]),
    "alpha-mlp-pre": _mlp([100, 100, 100, 50, 4]),
    "alpha-pen0": PenSpec(0, _inner([1, 100, 50, 20]), _mlp([22, 100, 100, 50, 4]), extra_dim=2),
    # AR(2), M = 100
    "ar2-mlp-small": _mlp([100, 55, 55, 25, 2]),
    "ar2-mlp-large": _mlp([100, 100, 100, 50, 2]),
    "ar2-pen0": PenSpec(0, _inner([1, 100, 50, 10]), _mlp([10, 50, 50, 20, 2])),
    "ar2-pen2": PenSpec(2, _inner([3, 100, 50, 10]), _mlp([12, 50, 50, 20, 2])),
    # MA(2), M = 100; the published inner networks end in a relu layer
    "ma2-mlp-small": _mlp([100, 60, 60, 25, 2]),
    "ma2-mlp-large": _mlp([100, 100, 100, 50, 2]),
    "ma2-pen0": PenSpec(0, _inner([1, 100, 50, 10], last=RELU), _mlp([10, 50, 50, 20, 2])),
    "ma2-pen10": PenSpec(10, _inner([11, 100, 50, 10], last=RELU), _mlp([20, 50, 50, 20, 2])),
}


def pen_spec_for(
    d, latent=10, p=2, outer_hidden=(50, 50, 20), inner_hidden=(100, 50), extra_dim=0, pooling="sum"
):
    """A PEN-d with the AR(2)-style layout for arbitrary d."""
    inner = _inner([d + 1, *inner_hidden, latent])
    outer = _mlp([d + latent + extra_dim, *outer_hidden, p])
    return PenSpec(d, inner, outer, extra_dim, pooling)


__all__ = [
    "BlockSwitch",
    "InvarianceReport",
    "Layer",
    "PRESETS",
    "PenNetwork",
    "PenSpec",
    "PenWeights",
    "block_switch",
    "init_pen_weights",
    "is_d_block_switch_invariant",
    "pen_backward",
    "pen_forward",
    "pen_predict",
    "pen_spec_for",
    "permutation_discrepancy",
    "plant_block_switch",
    "windows",
]
