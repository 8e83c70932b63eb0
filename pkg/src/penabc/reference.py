"""Reference posteriors and evaluation metrics.

Exact Gaussian likelihoods for AR(2) and noisy MA(2), a finite-difference
g-and-k density, a deterministic grid posterior for the 2-D models, a
random-walk Metropolis sampler, the exact order-1 Wasserstein distance and
the RMSE used for the alpha-stable benchmark.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from . import kernels
from .abc import PosteriorSample
from .models import GANDK_C, MA2_SIGMA_EPS, ar2_stationary_cov, in_ar2_triangle, in_ma2_triangle

LOG2PI = math.log(2.0 * math.pi)
GK_FD_STEP = 1e-6


@dataclass(frozen=True)
class LogDensity:
    """A log density (up to a constant) together with its support predicate."""

    evaluator: Callable
    support: Callable

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not bool(self.support(theta)):
            return -np.inf
        return float(self.evaluator(theta))


# --------------------------------------------------------------------------
# exact likelihoods
# --------------------------------------------------------------------------


def _ar2_lag_products(y):
    """3x3 matrix S[i, j] = sum_l y_{l-i} y_{l-j} over l = 3..M (0-based l = 2..M-1)."""
    m = y.shape[0]
    cols = np.column_stack([y[2:], y[1 : m - 1], y[: m - 2]])
    return cols.T @ cols


def ar2_loglik(theta, y):
    """Exact stationary Gaussian log-likelihood of an AR(2) series.

    ``theta`` may be one (2,) vector or a batch (G, 2); rows outside the
    stationarity triangle get ``-inf``.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 3:
        raise ValueError("need a 1-D series with at least 3 points")
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    out = np.full(th.shape[0], -np.inf)
    ok = in_ar2_triangle(th)
    if ok.any():
        t = th[ok]
        with np.errstate(divide="ignore", invalid="ignore"):
            g0, g1 = ar2_stationary_cov(t)
            det = g0 * g0 - g1 * g1
            q0 = (g0 * (y[0] ** 2 + y[1] ** 2) - 2.0 * g1 * y[0] * y[1]) / det
            head = -LOG2PI - 0.5 * np.log(det) - 0.5 * q0
        # nodes within rounding of the boundary have unbounded variance
        head = np.where((det > 0) & np.isfinite(head), head, -np.inf)
        S = _ar2_lag_products(y)
        v = np.column_stack([np.ones(len(t)), -t[:, 0], -t[:, 1]])
        rss = np.einsum("gi,ij,gj->g", v, S, v)
        tail = -0.5 * (y.shape[0] - 2) * LOG2PI - 0.5 * rss
        out[ok] = head + tail
    return out[0] if single else out


def ma2_loglik(theta, y, sigma_eps=MA2_SIGMA_EPS):
    """Exact Gaussian log-density of the noisy MA(2) series (banded covariance)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 1:
        raise ValueError("need a nonempty 1-D series")
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    out = np.full(th.shape[0], -np.inf)
    ok = in_ma2_triangle(th)
    if ok.any():
        out[ok] = kernels.ma2_loglik_batch(y, th[ok], sigma_eps**2)
    return out[0] if single else out


def gaussian_logpdf_dense(y, cov):
    """Multivariate normal log-density with zero mean, via a dense Cholesky."""
    L = np.linalg.cholesky(cov)
    u = np.linalg.solve(L, y)
    return float(-0.5 * u @ u - np.log(np.diag(L)).sum() - 0.5 * len(y) * LOG2PI)


# --------------------------------------------------------------------------
# g-and-k density by inversion and finite differences
# --------------------------------------------------------------------------


def _gk_q(z, a, b, g, k, c):
    return a + b * (1.0 + c * np.tanh(g * z / 2.0)) * z * (1.0 + z * z) ** k


def gandk_logpdf(theta, x, c=GANDK_C):
    """Pointwise log-density of the g-and-k distribution.

    Solves ``Q(z) = x`` by bisection and returns ``log phi(z) - log Q'(z)``,
    with ``Q'`` a central difference of step 1e-6 in z.  Points the quantile
    function cannot reach get ``-inf``.
    """
    a, b, g, k = (float(v) for v in theta)
    if not (b > 0.0 and k >= 0.0):
        raise ValueError(f"g-and-k needs B > 0 and k >= 0, got B={b}, k={k}")
    x = np.asarray(x, dtype=float)
    z = kernels.gandk_invert(x, a, b, g, k, c).reshape(x.shape)
    h = GK_FD_STEP
    dq = (_gk_q(z + h, a, b, g, k, c) - _gk_q(z - h, a, b, g, k, c)) / (2.0 * h)
    edge = (z <= kernels.GK_Z_LO + 1e-6) | (z >= kernels.GK_Z_HI - 1e-6)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = -0.5 * z * z - 0.5 * LOG2PI - np.log(dq)
    lp = np.where(edge | ~(dq > 0) | ~np.isfinite(x), -np.inf, lp)
    return lp


def gandk_loglik(theta, y, c=GANDK_C):
    """Sum of :func:`gandk_logpdf` over an i.i.d. sample; ``-inf`` off support."""
    theta = np.asarray(theta, dtype=float)
    if not (theta[1] > 0.0 and theta[3] >= 0.0):
        return -np.inf
    return float(gandk_logpdf(theta, y, c).sum())


# --------------------------------------------------------------------------
# grid posterior for the 2-D models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridPosterior:
    nodes: np.ndarray  # (G, 2)
    masses: np.ndarray  # (G,)

    def mean(self):
        return self.masses @ self.nodes

    def cov(self):
        c = self.nodes - self.mean()
        return (c * self.masses[:, None]).T @ c


def triangle_grid(support, step=0.005, box=((-2.0, 2.0), (-1.0, 1.0))):
    """Cell-centred nodes of a regular grid over ``box`` kept where ``support`` holds."""
    (x0, x1), (y0, y1) = box
    nx = int(round((x1 - x0) / step))
    ny = int(round((y1 - y0) / step))
    gx = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    gy = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    nodes = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1).reshape(-1, 2)
    return nodes[support(nodes)]


def grid_posterior(loglik, nodes, log_prior=None):
    """Normalised masses proportional to ``exp(loglik + log_prior)`` on ``nodes``.

    ``loglik`` maps a (G, 2) array to (G,) log-likelihoods.  A flat prior is
    used when ``log_prior`` is omitted; both triangle priors are uniform.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise ValueError("grid posteriors are for 2-D parameters only")
    lp = np.asarray(loglik(nodes), dtype=float)
    if log_prior is not None:
        lp = lp + np.asarray(log_prior(nodes), dtype=float)
    finite = np.isfinite(lp)
    if not finite.any():
        raise ValueError("every grid node has zero posterior mass")
    masses = np.zeros_like(lp)
    masses[finite] = np.exp(lp[finite] - logsumexp(lp[finite]))
    masses /= math.fsum(masses)
    return GridPosterior(nodes, masses)


def sample_grid(gp, n, rng):
    """Inverse-CDF draws of grid nodes."""
    cdf = np.cumsum(gp.masses)
    u = rng.random(n) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    return PosteriorSample(gp.nodes[idx].copy(), "reference")


# --------------------------------------------------------------------------
# random-walk Metropolis
# --------------------------------------------------------------------------


@dataclass
class Chain:
    draws: np.ndarray
    acceptance_rate: float
    scale: np.ndarray

    def sample(self):
        return PosteriorSample(self.draws, "reference")


class ZeroAcceptance(RuntimeError):
    pass


def rw_metropolis(
    logpost,
    init,
    steps,
    proposal_scale,
    rng,
    burn=0,
    thin=1,
    adapt=False,
    target=(0.2, 0.4),
):
    """Gaussian random-walk Metropolis.

    ``proposal_scale`` is a scalar or per-coordinate vector of proposal
    standard deviations.  With ``adapt=True`` the scale is rescaled every
    100 burn-in steps to push acceptance into ``target``; it is frozen after
    burn-in so the kept chain is a valid Markov chain.  The reported
    acceptance rate covers post-burn-in steps.
    """
    x = np.array(init, dtype=float)
    lp = logpost(x)
    if not np.isfinite(lp):
        raise ValueError("initial point has zero posterior density")
    scale = np.broadcast_to(np.asarray(proposal_scale, dtype=float), x.shape).copy()
    kept = []
    acc_total = 0
    acc_window = 0
    for it in range(burn + steps):
        prop = x + scale * rng.standard_normal(x.shape)
        lp_prop = logpost(prop)
        if np.log(rng.random()) < lp_prop - lp:
            x, lp = prop, lp_prop
            accepted = True
        else:
            accepted = False
        if it < burn:
            acc_window += accepted
            if adapt and (it + 1) % 100 == 0:
                rate = acc_window / 100.0
                if rate < target[0]:
                    scale *= 0.7
                elif rate > target[1]:
                    scale *= 1.3
                acc_window = 0
            continue
        acc_total += accepted
        if (it - burn) % thin == 0:
            kept.append(x.copy())
    if steps > 0 and acc_total == 0:
        raise ZeroAcceptance(f"no proposals accepted in {steps} steps; reduce the proposal scale")
    rate = acc_total / steps if steps else float("nan")
    return Chain(np.array(kept), rate, scale)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


def _as_draws(s):
    d = s.draws if isinstance(s, PosteriorSample) else np.asarray(s, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if d.shape[0] == 0:
        raise ValueError("empty posterior sample")
    return d


def equalize(a, b, rng=None):
    """Subsample the larger set uniformly without replacement to the smaller size."""
    if a.shape[0] == b.shape[0]:
        return a, b
    rng = np.random.default_rng(0) if rng is None else rng
    n = min(a.shape[0], b.shape[0])
    if a.shape[0] > n:
        a = a[np.sort(rng.choice(a.shape[0], n, replace=False))]
    else:
        b = b[np.sort(rng.choice(b.shape[0], n, replace=False))]
    return a, b


def cost_matrix(a, b):
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))


def wasserstein_assignment(a, b):
    """Order-1 Wasserstein via an optimal assignment on Euclidean costs."""
    cost = cost_matrix(a, b)
    rows, cols = linear_sum_assignment(cost)
    return math.fsum(cost[rows, cols]) / a.shape[0]


def wasserstein_1d(a, b):
    """Sorted pairing, which is optimal for order 1 on the line."""
    return math.fsum(np.abs(np.sort(a.ravel()) - np.sort(b.ravel()))) / a.shape[0]


def wasserstein_bruteforce(a, b):
    """Minimum over all n! matchings; only for tiny n."""
    cost = cost_matrix(a, b)
    n = a.shape[0]
    best = min(math.fsum(cost[range(n), perm]) for perm in itertools.permutations(range(n)))
    return best / n


def wasserstein(a, b, rng=None):
    """Exact order-1 Wasserstein distance between equal-weight samples."""
    a = _as_draws(a)
    b = _as_draws(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    a, b = equalize(a, b, rng)
    if a.shape[1] == 1:
        return wasserstein_1d(a, b)
    return wasserstein_assignment(a, b)


def rmse(estimates, truth):
    """``sqrt(mean_r sum_j (est[r, j] - truth[j])^2)`` over R repetitions."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if est.shape[1] != truth.shape[-1]:
        raise ValueError(f"estimate dimension {est.shape[1]} != truth dimension {truth.shape[-1]}")
    if est.shape[0] < 1:
        raise ValueError("need at least one repetition")
    return math.sqrt(((est - truth) ** 2).sum(axis=1).mean())


def reference_posterior(model, y, n, rng, step=0.005):
    """Grid-based reference posterior draws for AR(2) or MA(2) data."""
    from .models import ModelId

    model = ModelId.parse(model)
    if model is ModelId.AR2:
        nodes = triangle_grid(in_ar2_triangle, step)
        gp = grid_posterior(lambda t: ar2_loglik(t, y), nodes)
    elif model is ModelId.MA2:
        nodes = triangle_grid(in_ma2_triangle, step)
        gp = grid_posterior(lambda t: ma2_loglik(t, y), nodes)
    else:
        raise ValueError(f"no grid reference posterior for {model.value}")
    return sample_grid(gp, n, rng)


def gandk_reference_posterior(y, n, rng, init=None, burn=3000, thin=10, prior=None):
    """Metropolis posterior for g-and-k data using the finite-difference density."""
    from .models import get_model

    bm = get_model("gandk")
    y = np.asarray(y, dtype=float)

    def logpost(t):
        if not (np.all(t > 0.0) and t[1] > 0.0):
            return -np.inf
        return gandk_loglik(t, y) + float(bm.log_prior(t)[0])

    if init is None:
        q = np.percentile(y, [25, 50, 75])
        init = np.array([q[1], max((q[2] - q[0]) / 1.35, 0.1), 1.0, 0.5])
    chain = rw_metropolis(
        logpost, init, n * thin, np.array([0.05, 0.05, 0.1, 0.03]), rng,
        burn=burn, thin=thin, adapt=True,
    )
    return chain
