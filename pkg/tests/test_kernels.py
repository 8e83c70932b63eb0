import os
import subprocess
import sys

import numpy as np
import pytest

from penabc import kernels

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


def _inputs():
    r = np.random.default_rng(0)
    return {
        "ar2_filter": (r.standard_normal((50, 100)), r.uniform(-0.5, 0.5, (50, 2)), r.standard_normal((50, 2))),
        "gandk_invert": (r.normal(3, 2, 500), 3.0, 1.0, 2.0, 0.5, 0.8),
        "kahan_pool": (r.standard_normal((20, 98, 10)),),
        "ecdf_rows": (r.standard_normal((30, 200)), np.linspace(-3, 3, 100)),
        "ma2_loglik_batch": (r.standard_normal(100), r.uniform(-0.5, 0.5, (40, 2)), 0.09),
    }


@needs_numba
@pytest.mark.parametrize("name", sorted(kernels.KERNELS))
def test_numba_matches_numpy(name):
    nb_fn, np_fn = kernels.KERNELS[name]
    args = _inputs()[name]
    a, b = nb_fn(*args), np_fn(*args)
    if name in ("ar2_filter", "kahan_pool", "ecdf_rows"):
        # same operations in the same order
        assert np.array_equal(a, b)
    else:
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_ar2_filter_matches_explicit_recursion():
    xi, theta, init = _inputs()["ar2_filter"]
    y = kernels.ar2_filter(xi, theta, init)
    r = 7
    oracle = [init[r, 0], init[r, 1]]
    for l in range(2, 100):
        oracle.append(theta[r, 0] * oracle[-1] + theta[r, 1] * oracle[-2] + xi[r, l])
    assert np.allclose(y[r], oracle, rtol=1e-13, atol=1e-13)


def test_gandk_invert_solves_the_quantile_equation():
    x, a, b, g, k, c = _inputs()["gandk_invert"]
    z = kernels.gandk_invert(x, a, b, g, k, c)
    q = a + b * (1 + c * np.tanh(g * z / 2)) * z * (1 + z * z) ** k
    assert np.allclose(q, x, atol=1e-9)


def test_kahan_pool_beats_naive_summation():
    # 1 followed by many tiny values the naive sum drops
    latent = np.full((1, 10001, 1), 1e-16)
    latent[0, 0, 0] = 1.0
    exact = 1.0 + 1e-12
    assert abs(kernels.kahan_pool(latent)[0, 0] - exact) < 1e-15
    assert abs(latent.sum(axis=1)[0, 0] - exact) > abs(kernels.kahan_pool(latent)[0, 0] - exact)


def test_ecdf_rows_counts():
    ys = np.array([[3.0, 1.0, 2.0, 2.0]])
    out = kernels.ecdf_rows(ys, np.array([0.0, 1.0, 2.0, 2.5, 3.0]))
    assert out.tolist() == [[0.0, 0.25, 0.75, 0.75, 1.0]]


def test_ma2_loglik_matches_dense_gaussian():
    from scipy.linalg import toeplitz
    from scipy.stats import multivariate_normal

    y, theta, s2 = _inputs()["ma2_loglik_batch"]
    y = y[:30]
    out = kernels.ma2_loglik_batch(y, theta[:5], s2)
    for t, v in zip(theta[:5], out):
        col = np.zeros(30)
        col[:3] = [1 + t[0] ** 2 + t[1] ** 2 + s2, t[0] * (1 + t[1]), t[1]]
        assert v == pytest.approx(multivariate_normal(np.zeros(30), toeplitz(col)).logpdf(y), rel=1e-12)


def _backend(env):
    code = "from penabc import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


@needs_numba
def test_env_flag_selects_numpy_fallback():
    env = dict(os.environ)
    env.pop("PENABC_DISABLE_NUMBA", None)
    assert _backend(env) == "numba"
    env["PENABC_DISABLE_NUMBA"] = "1"
    assert _backend(env) == "numpy"
