"""Priors for the four benchmark models."""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ModelId(str, Enum):
    GANDK = "gandk"
    ALPHA_STABLE = "alpha"
    AR2 = "ar2"
    MA2 = "ma2"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "gandk": cls.GANDK,
            "gk": cls.GANDK,
            "alpha": cls.ALPHA_STABLE,
            "alphastable": cls.ALPHA_STABLE,
            "stable": cls.ALPHA_STABLE,
            "ar2": cls.AR2,
            "ma2": cls.MA2,
        }
        if key not in aliases:
            raise ValueError(f"unknown model {value!r}; expected one of gandk, alpha, ar2, ma2")
        return aliases[key]


N_PARAMS = {ModelId.GANDK: 4, ModelId.ALPHA_STABLE: 4, ModelId.AR2: 2, ModelId.MA2: 2}


@dataclass(frozen=True)
class PriorSpec:
    """Prior of one benchmark model.

    ``gamma_shape``/``gamma_rate`` are used by g-and-k only.  The alpha-stable
    prior lives on the transformed parameters, the AR(2) and MA(2) priors are
    uniform on their triangles.
    """

    model: ModelId
    gamma_shape: tuple = (2.0, 2.0, 2.0, 2.0)
    gamma_rate: tuple = (1.0, 1.0, 0.5, 1.0)

    @property
    def n_params(self):
        return N_PARAMS[self.model]


def default_prior(model):
    return PriorSpec(ModelId.parse(model))


def in_ar2_triangle(theta):
    """Strict AR(2) stationarity triangle, vectorised over the last axis."""
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    return (t2 < 1.0 + t1) & (t2 < 1.0 - t1) & (t2 > -1.0)


def in_ma2_triangle(theta):
    """MA(2) identifiability triangle: t1 in [-2,2], t2 in [-1,1], t2 +- t1 >= -1."""
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    return (
        (t1 >= -2.0)
        & (t1 <= 2.0)
        & (t2 >= -1.0)
        & (t2 <= 1.0)
        & (t2 + t1 >= -1.0)
        & (t2 - t1 >= -1.0)
    )


def in_support(prior, theta):
    theta = np.asarray(theta, dtype=float)
    if prior.model is ModelId.GANDK:
        return np.all(theta > 0.0, axis=-1) & np.all(np.isfinite(theta), axis=-1)
    if prior.model is ModelId.ALPHA_STABLE:
        return np.all(np.isfinite(theta), axis=-1)
    if prior.model is ModelId.AR2:
        return in_ar2_triangle(theta)
    return in_ma2_triangle(theta)


def _triangle(rng, size, inside):
    out = np.empty((size, 2))
    filled = 0
    while filled < size:
        # the box [-2,2]x[-1,1] has twice the triangle's area
        block = max(16, 2 * (size - filled) + 8)
        cand = np.column_stack(
            [rng.uniform(-2.0, 2.0, block), rng.uniform(-1.0, 1.0, block)]
        )
        keep = cand[inside(cand)]
        take = min(len(keep), size - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def sample_prior(prior, rng, size=None):
    """Draw from the prior; returns shape (p,) or (size, p).

    The triangle priors use rejection from the enclosing box, which keeps the
    draws exactly uniform.
    """
    n = 1 if size is None else int(size)
    if prior.model is ModelId.GANDK:
        shape = np.asarray(prior.gamma_shape, dtype=float)
        scale = 1.0 / np.asarray(prior.gamma_rate, dtype=float)
        draws = rng.gamma(shape, scale, size=(n, 4))
    elif prior.model is ModelId.ALPHA_STABLE:
        draws = rng.standard_normal((n, 4))
    elif prior.model is ModelId.AR2:
        draws = _triangle(rng, n, in_ar2_triangle)
    else:
        draws = _triangle(rng, n, in_ma2_triangle)
    return draws[0] if size is None else draws


def log_prior(prior, theta):
    """Log prior density (normalised), ``-inf`` off the support."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if prior.model is ModelId.GANDK:
        from scipy.stats import gamma

        shape = np.asarray(prior.gamma_shape)
        scale = 1.0 / np.asarray(prior.gamma_rate)
        with np.errstate(divide="ignore"):
            lp = gamma.logpdf(theta, shape, scale=scale).sum(axis=1)
    elif prior.model is ModelId.ALPHA_STABLE:
        lp = -0.5 * (theta**2).sum(axis=1) - 2.0 * np.log(2.0 * np.pi)
    else:
        # both triangles have area 4
        inside = in_support(prior, theta)
        lp = np.where(inside, -np.log(4.0), -np.inf)
    return lp
