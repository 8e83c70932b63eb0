"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba versions are used when numba imports cleanly, unless the
environment variable ``PENABC_DISABLE_NUMBA`` is set to a truthy value
(``1``, ``true``, ``yes``).  Both paths perform the same floating-point
operations in the same order wherever that is practical, so results agree
bitwise for the recursions and to the last ulp for transcendental-heavy
kernels (libm and numpy may round ``tanh``/``pow`` differently).

Every public kernel has ``<name>_numpy`` and ``<name>_numba`` variants (the
latter is ``None`` without numba); the bare ``<name>`` is the selected one.
``gandk_invert`` always takes the numpy path, which measures faster.
"""

import math
import os

import numpy as np

_FLAG = os.environ.get("PENABC_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"

# Bisection bracket and iteration count for the g-and-k quantile inversion.
# 60 halvings of a width-80 bracket leave ~7e-17, i.e. machine precision in z.
GK_Z_LO = -40.0
GK_Z_HI = 40.0
GK_BISECT_ITERS = 60


def _jit(fn):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# AR(2) recursion over a batch of series
# --------------------------------------------------------------------------


def _ar2_filter_loop(xi, theta, init):
    n, m = xi.shape
    y = np.empty((n, m))
    for r in range(n):
        t1 = theta[r, 0]
        t2 = theta[r, 1]
        y[r, 0] = init[r, 0]
        if m > 1:
            y[r, 1] = init[r, 1]
        for l in range(2, m):
            y[r, l] = t1 * y[r, l - 1] + t2 * y[r, l - 2] + xi[r, l]
    return y


def ar2_filter_numpy(xi, theta, init):
    """Run ``y_l = t1*y_{l-1} + t2*y_{l-2} + xi_l`` row-wise.

    ``xi`` is (n, M) innovations (columns 0 and 1 are ignored), ``theta`` is
    (n, 2) and ``init`` (n, 2) holds the first two values of each series.
    """
    n, m = xi.shape
    y = np.empty((n, m))
    y[:, 0] = init[:, 0]
    if m > 1:
        y[:, 1] = init[:, 1]
    t1 = theta[:, 0]
    t2 = theta[:, 1]
    for l in range(2, m):
        y[:, l] = t1 * y[:, l - 1] + t2 * y[:, l - 2] + xi[:, l]
    return y


ar2_filter_numba = _jit(_ar2_filter_loop)


# --------------------------------------------------------------------------
# g-and-k quantile inversion
# --------------------------------------------------------------------------


def _gk_q(z, a, b, g, k, c):
    return a + b * (1.0 + c * math.tanh(g * z / 2.0)) * z * (1.0 + z * z) ** k


if HAVE_NUMBA:
    _gk_q_nb = numba.njit(cache=True, inline="always")(_gk_q)

    @numba.njit(cache=True, nogil=True)
    def gandk_invert_numba(x, a, b, g, k, c):
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            lo = GK_Z_LO
            hi = GK_Z_HI
            xi = x[i]
            for _ in range(GK_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                if _gk_q_nb(mid, a, b, g, k, c) < xi:
                    lo = mid
                else:
                    hi = mid
            out[i] = 0.5 * (lo + hi)
        return out

else:  # pragma: no cover
    gandk_invert_numba = None


def gandk_invert_numpy(x, a, b, g, k, c):
    """Solve ``Q(z) = x`` for z by bisection on ``[GK_Z_LO, GK_Z_HI]``.

    Q is monotone increasing in z for B > 0, k >= 0 and c = 0.8, so plain
    bisection is safe.  Values of x beyond Q(+-40) come back pinned at the
    bracket edge; callers treat those as unattainable.
    """
    x = np.asarray(x, dtype=float)
    lo = np.full(x.shape, GK_Z_LO)
    hi = np.full(x.shape, GK_Z_HI)
    for _ in range(GK_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        q = a + b * (1.0 + c * np.tanh(g * mid / 2.0)) * mid * (1.0 + mid * mid) ** k
        below = q < x
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Compensated (Kahan) pooling over the window axis
# --------------------------------------------------------------------------


def _kahan_pool_loop(latent):
    n, w, d = latent.shape
    out = np.empty((n, d))
    for r in range(n):
        for j in range(d):
            s = 0.0
            comp = 0.0
            for i in range(w):
                yv = latent[r, i, j] - comp
                t = s + yv
                comp = (t - s) - yv
                s = t
            out[r, j] = s
    return out


def kahan_pool_numpy(latent):
    """Compensated sum of ``latent`` (n, W, L) over axis 1."""
    latent = np.asarray(latent, dtype=float)
    s = np.zeros((latent.shape[0], latent.shape[2]))
    comp = np.zeros_like(s)
    for i in range(latent.shape[1]):
        yv = latent[:, i, :] - comp
        t = s + yv
        comp = (t - s) - yv
        s = t
    return s


kahan_pool_numba = _jit(_kahan_pool_loop)


# --------------------------------------------------------------------------
# Empirical CDF on a grid, row-wise
# --------------------------------------------------------------------------


def _ecdf_rows_loop(srt, grid):
    # rows of ``srt`` are already sorted; numpy's sort beats numba's here
    n, m = srt.shape
    gsz = grid.shape[0]
    out = np.empty((n, gsz))
    for r in range(n):
        row = srt[r]
        pos = 0
        for j in range(gsz):
            while pos < m and row[pos] <= grid[j]:
                pos += 1
            out[r, j] = pos / m
    return out


def ecdf_rows_numpy(ys, grid):
    """Fraction of each row of ``ys`` that is ``<= grid[j]`` (grid increasing)."""
    ys = np.asarray(ys, dtype=float)
    m = ys.shape[1]
    srt = np.sort(ys, axis=1)
    out = np.empty((ys.shape[0], grid.shape[0]))
    for r in range(ys.shape[0]):
        out[r] = np.searchsorted(srt[r], grid, side="right") / m
    return out


_ecdf_merge_numba = _jit(_ecdf_rows_loop)


def _ecdf_rows_sorted_numba(ys, grid):
    return _ecdf_merge_numba(np.sort(ys, axis=1), grid)


ecdf_rows_numba = _ecdf_rows_sorted_numba if HAVE_NUMBA else None


# --------------------------------------------------------------------------
# MA(2)-plus-noise Gaussian log-likelihood over a batch of parameters
# --------------------------------------------------------------------------


def _ma2_loglik_loop(y, theta, sigma2):
    m = y.shape[0]
    g = theta.shape[0]
    out = np.empty(g)
    log2pi = math.log(2.0 * math.pi)
    for r in range(g):
        t1 = theta[r, 0]
        t2 = theta[r, 1]
        c0 = 1.0 + t1 * t1 + t2 * t2 + sigma2
        c1 = t1 * (1.0 + t2)
        c2 = t2
        # banded Cholesky, bandwidth 2; a = L[i,i-2], b = L[i,i-1], d = L[i,i]
        d_pp = 0.0
        d_p = 0.0
        b_p = 0.0
        u_pp = 0.0
        u_p = 0.0
        quad = 0.0
        logdet = 0.0
        for i in range(m):
            a = c2 / d_pp if i >= 2 else 0.0
            if i >= 1:
                b = (c1 - a * b_p) / d_p
            else:
                b = 0.0
            dd = math.sqrt(c0 - a * a - b * b)
            u = (y[i] - b * u_p - a * u_pp) / dd
            quad += u * u
            logdet += math.log(dd)
            d_pp = d_p
            d_p = dd
            b_p = b
            u_pp = u_p
            u_p = u
        out[r] = -0.5 * quad - logdet - 0.5 * m * log2pi
    return out


def ma2_loglik_numpy(y, theta, sigma2):
    """Exact Gaussian log-density of ``y`` for every row of ``theta`` (G, 2).

    The covariance is the banded Toeplitz matrix with diagonal
    ``1 + t1^2 + t2^2 + sigma2``, first off-diagonal ``t1 (1 + t2)`` and second
    off-diagonal ``t2``; it is factorised by a bandwidth-2 Cholesky recursion.
    """
    y = np.asarray(y, dtype=float)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    m = y.shape[0]
    t1 = theta[:, 0]
    t2 = theta[:, 1]
    c0 = 1.0 + t1 * t1 + t2 * t2 + sigma2
    c1 = t1 * (1.0 + t2)
    c2 = t2
    zeros = np.zeros_like(t1)
    d_pp = zeros.copy()
    d_p = zeros.copy()
    b_p = zeros.copy()
    u_pp = zeros.copy()
    u_p = zeros.copy()
    quad = zeros.copy()
    logdet = zeros.copy()
    for i in range(m):
        a = c2 / d_pp if i >= 2 else zeros
        b = (c1 - a * b_p) / d_p if i >= 1 else zeros
        dd = np.sqrt(c0 - a * a - b * b)
        u = (y[i] - b * u_p - a * u_pp) / dd
        quad = quad + u * u
        logdet = logdet + np.log(dd)
        d_pp, d_p, b_p, u_pp, u_p = d_p, dd, b, u_p, u
    return -0.5 * quad - logdet - 0.5 * m * math.log(2.0 * math.pi)


ma2_loglik_numba = _jit(_ma2_loglik_loop)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def _pick(nb_fn, np_fn):
    return nb_fn if USE_NUMBA and nb_fn is not None else np_fn


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def ar2_filter(xi, theta, init):
    return _pick(ar2_filter_numba, ar2_filter_numpy)(
        _as_f64(xi), _as_f64(theta), _as_f64(init)
    )


def gandk_invert(x, a, b, g, k, c):
    # numpy's vectorised tanh/pow outrun the scalar numba loop on this one
    # (see benchmarks/bench_kernels.py), so the numpy path is always used
    fn = gandk_invert_numpy
    return fn(_as_f64(np.ravel(x)), float(a), float(b), float(g), float(k), float(c))


def kahan_pool(latent):
    return _pick(kahan_pool_numba, kahan_pool_numpy)(_as_f64(latent))


def ecdf_rows(ys, grid):
    return _pick(ecdf_rows_numba, ecdf_rows_numpy)(_as_f64(ys), _as_f64(grid))


def ma2_loglik_batch(y, theta, sigma2):
    theta = np.atleast_2d(theta)
    return _pick(ma2_loglik_numba, ma2_loglik_numpy)(
        _as_f64(y), _as_f64(theta), float(sigma2)
    )


KERNELS = {
    "ar2_filter": (ar2_filter_numba, ar2_filter_numpy),
    "gandk_invert": (gandk_invert_numba, gandk_invert_numpy),
    "kahan_pool": (kahan_pool_numba, kahan_pool_numpy),
    "ecdf_rows": (ecdf_rows_numba, ecdf_rows_numpy),
    "ma2_loglik_batch": (ma2_loglik_numba, ma2_loglik_numpy),
}
