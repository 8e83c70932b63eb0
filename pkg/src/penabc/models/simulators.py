"""Simulators for the g-and-k, alpha-stable, AR(2) and noisy MA(2) models.

All simulators accept either one parameter vector (returning an (M,) series)
or a batch of shape (n, p) (returning (n, M)).  Invalid parameter rows raise
``ValueError`` naming the offending row.
"""

import numpy as np

from .. import kernels
from .priors import in_ar2_triangle, in_ma2_triangle

GANDK_C = 0.8
MA2_SIGMA_EPS = 0.3


def _batch(theta, p):
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    if theta.shape[1] != p:
        raise ValueError(f"expected {p} parameters per row, got {theta.shape[1]}")
    return theta, single


def _first_bad(mask):
    return int(np.flatnonzero(~mask)[0])


# --------------------------------------------------------------------------
# g-and-k
# --------------------------------------------------------------------------


def gandk_quantile(z, theta, c=GANDK_C):
    """g-and-k quantile function evaluated at standard normal quantiles ``z``."""
    a, b, g, k = (float(v) for v in theta)
    z = np.asarray(z, dtype=float)
    return a + b * (1.0 + c * np.tanh(g * z / 2.0)) * z * (1.0 + z**2) ** k


def simulate_gandk(theta, M, rng, c=GANDK_C):
    theta, single = _batch(theta, 4)
    ok = (theta[:, 1] > 0.0) & (theta[:, 3] >= 0.0)
    if not ok.all():
        i = _first_bad(ok)
        raise ValueError(f"g-and-k needs B > 0 and k >= 0 (row {i}: {theta[i]})")
    z = rng.standard_normal((theta.shape[0], M))
    a, b, g, k = (theta[:, j : j + 1] for j in range(4))
    y = a + b * (1.0 + c * np.tanh(g * z / 2.0)) * z * (1.0 + z**2) ** k
    return y[0] if single else y


# --------------------------------------------------------------------------
# alpha-stable
# --------------------------------------------------------------------------


def transform_alpha_params(raw):
    """Map (alpha, beta, gamma, delta) to the unconstrained scale.

    alpha -> log((alpha-1.1)/(2-alpha)), beta -> log((1+beta)/(1-beta)),
    gamma -> log(gamma), delta unchanged.  The beta map is evaluated as
    ``2*arctanh(beta)``, which is the same function with better relative
    accuracy near zero.
    """
    raw = np.asarray(raw, dtype=float)
    a, b, g, d = raw[..., 0], raw[..., 1], raw[..., 2], raw[..., 3]
    ok = (a > 1.1) & (a < 2.0) & (b > -1.0) & (b < 1.0) & (g > 0.0) & np.isfinite(d)
    if not np.all(ok):
        raise ValueError(
            "alpha-stable parameters must satisfy 1.1 < alpha < 2, -1 < beta < 1, gamma > 0"
        )
    out = np.empty_like(raw)
    out[..., 0] = np.log((a - 1.1) / (2.0 - a))
    out[..., 1] = 2.0 * np.arctanh(b)
    out[..., 2] = np.log(g)
    out[..., 3] = d
    return out


def inverse_transform_alpha_params(tilde):
    tilde = np.asarray(tilde, dtype=float)
    if not np.all(np.isfinite(tilde)):
        raise ValueError("transformed alpha-stable parameters must be finite")
    out = np.empty_like(tilde)
    ex = np.exp(-np.abs(tilde[..., 0]))
    # numerically stable logistic
    sig = np.where(tilde[..., 0] >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    out[..., 0] = 1.1 + 0.9 * sig
    out[..., 1] = np.tanh(tilde[..., 1] / 2.0)
    out[..., 2] = np.exp(tilde[..., 2])
    out[..., 3] = tilde[..., 3]
    return out


def alpha_stable_cf(t, alpha, beta, gamma, delta):
    """Characteristic function of the stable law in the parameterisation used here.

    For alpha != 1::

        exp(i*delta*t - gamma^alpha |t|^alpha
            (1 + i*beta*tan(pi*alpha/2) sgn(t) (|gamma t|^(1-alpha) - 1)))

    and the logarithmic form for alpha == 1.  This is the continuous
    ("S0") parameterisation: delta is a location that does not jump as alpha
    crosses 1.
    """
    t = np.asarray(t, dtype=float)
    at = np.abs(t)
    sgn = np.sign(t)
    if alpha == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(at > 0, np.log(gamma * at), 0.0)
        expo = 1j * delta * t - gamma * at * (1.0 + 1j * beta * (2.0 / np.pi) * sgn * lg)
    else:
        with np.errstate(divide="ignore"):
            corr = np.where(at > 0, np.abs(gamma * t) ** (1.0 - alpha) - 1.0, 0.0)
        expo = 1j * delta * t - gamma**alpha * at**alpha * (
            1.0 + 1j * beta * np.tan(np.pi * alpha / 2.0) * sgn * corr
        )
    return np.exp(expo)


def simulate_alpha_stable_raw(params, M, rng):
    """Chambers-Mallows-Stuck draws for untransformed (alpha, beta, gamma, delta).

    CMS produces the standard S1 law; the location is shifted by
    ``-beta*gamma*tan(pi*alpha/2)`` so that the draws follow the S0 form in
    :func:`alpha_stable_cf`.  alpha = 1 is outside the model's range
    (alpha > 1.1) and is not handled.
    """
    params, single = _batch(params, 4)
    alpha, beta, gamma, delta = (params[:, j : j + 1] for j in range(4))
    ok = (
        (params[:, 0] >= 1.1)
        & (params[:, 0] <= 2.0)
        & (np.abs(params[:, 1]) <= 1.0)
        & (params[:, 2] > 0.0)
        & np.isfinite(params[:, 2])
        & np.isfinite(params[:, 3])
    )
    if not ok.all():
        i = _first_bad(ok)
        raise ValueError(f"alpha-stable parameters out of range (row {i}: {params[i]})")
    n = params.shape[0]
    v = rng.uniform(-np.pi / 2.0, np.pi / 2.0, (n, M))
    w = rng.standard_exponential((n, M))
    tan_a = np.tan(np.pi * alpha / 2.0)
    bt = beta * tan_a
    b_shift = np.arctan(bt) / alpha
    s_fac = (1.0 + bt**2) ** (1.0 / (2.0 * alpha))
    x = (
        s_fac
        * np.sin(alpha * (v + b_shift))
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - alpha * (v + b_shift)) / w) ** ((1.0 - alpha) / alpha)
    )
    y = gamma * x + delta - beta * gamma * tan_a
    return y[0] if single else y


def simulate_alpha_stable(theta_tilde, M, rng):
    """Simulate from the alpha-stable model given transformed parameters."""
    return simulate_alpha_stable_raw(inverse_transform_alpha_params(theta_tilde), M, rng)


# --------------------------------------------------------------------------
# AR(2)
# --------------------------------------------------------------------------


def ar2_stationary_cov(theta):
    """Stationary variance and lag-1 autocovariance (unit innovation variance)."""
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    g0 = (1.0 - t2) / ((1.0 + t2) * ((1.0 - t2) ** 2 - t1**2))
    g1 = t1 * g0 / (1.0 - t2)
    return g0, g1


def simulate_ar2(theta, M, rng):
    """AR(2) with N(0,1) innovations started from its stationary law."""
    theta, single = _batch(theta, 2)
    ok = in_ar2_triangle(theta)
    if not ok.all():
        i = _first_bad(ok)
        raise ValueError(f"AR(2) parameters outside the stationarity triangle (row {i})")
    n = theta.shape[0]
    g0, g1 = ar2_stationary_cov(theta)
    # (y1, y2) ~ N(0, [[g0, g1], [g1, g0]]) via its Cholesky factor
    z = rng.standard_normal((n, 2))
    l11 = np.sqrt(g0)
    l21 = g1 / l11
    l22 = np.sqrt(g0 - l21**2)
    init = np.column_stack([l11 * z[:, 0], l21 * z[:, 0] + l22 * z[:, 1]])
    xi = rng.standard_normal((n, M))
    y = kernels.ar2_filter(xi, theta, init)
    return y[0] if single else y


# --------------------------------------------------------------------------
# MA(2) observed with noise
# --------------------------------------------------------------------------


def ma2_autocov(theta, sigma_eps=MA2_SIGMA_EPS):
    """Autocovariances (lag 0, 1, 2) of the noisy MA(2) observation process."""
    t1, t2 = float(theta[0]), float(theta[1])
    return (1.0 + t1**2 + t2**2 + sigma_eps**2, t1 * (1.0 + t2), t2)


def simulate_ma2_noisy(theta, M, rng, sigma_eps=MA2_SIGMA_EPS):
    theta, single = _batch(theta, 2)
    ok = in_ma2_triangle(theta)
    if not ok.all():
        i = _first_bad(ok)
        raise ValueError(f"MA(2) parameters outside the identifiability triangle (row {i})")
    n = theta.shape[0]
    xi = rng.standard_normal((n, M + 2))
    x = xi[:, 2:] + theta[:, :1] * xi[:, 1:-1] + theta[:, 1:2] * xi[:, :-2]
    y = x + sigma_eps * rng.standard_normal((n, M))
    return y[0] if single else y
