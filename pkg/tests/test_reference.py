import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.linalg import toeplitz
from scipy.stats import norm

from penabc.abc import PosteriorSample
from penabc.models import ar2_stationary_cov, get_model, in_ar2_triangle, in_ma2_triangle
from penabc.reference import (
    GridPosterior,
    LogDensity,
    ZeroAcceptance,
    ar2_loglik,
    gandk_loglik,
    gandk_logpdf,
    gandk_reference_posterior,
    gaussian_logpdf_dense,
    grid_posterior,
    ma2_loglik,
    reference_posterior,
    rmse,
    rw_metropolis,
    sample_grid,
    triangle_grid,
    wasserstein,
    wasserstein_1d,
    wasserstein_assignment,
    wasserstein_bruteforce,
)

GK_TRUTH = (3.0, 1.0, 2.0, 0.5)
AR2_TRUTH = (0.2, -0.13)
MA2_TRUTH = (0.6, 0.2)


def _simulate(model, theta, M, seed):
    bm = get_model(model)
    return bm.simulate(np.array([theta]), np.random.default_rng(seed), M)[0]


# --------------------------------------------------------------------------
# likelihoods
# --------------------------------------------------------------------------


def _ar2_dense_cov(theta, m):
    # autocovariances from the Yule-Walker recursion
    g0, g1 = ar2_stationary_cov(np.array([theta]))
    gam = [float(g0[0]), float(g1[0])]
    for _ in range(2, m):
        gam.append(theta[0] * gam[-1] + theta[1] * gam[-2])
    return toeplitz(gam)


def test_ar2_iid_reduction():
    y = np.random.default_rng(0).standard_normal(40)
    assert ar2_loglik(np.zeros(2), y) == pytest.approx(norm.logpdf(y).sum(), rel=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_ar2_matches_dense_oracle(seed):
    r = np.random.default_rng(seed)
    theta = get_model("ar2").sample_prior(r, 1)[0]
    y = r.standard_normal(50)
    dense = gaussian_logpdf_dense(y, _ar2_dense_cov(theta, 50))
    assert abs(ar2_loglik(theta, y) - dense) < 1e-8


def test_ar2_batch_and_support():
    y = np.random.default_rng(1).standard_normal(30)
    th = np.array([[0.1, 0.2], [3.0, 0.0], [0.5, -0.3]])
    out = ar2_loglik(th, y)
    assert out[1] == -np.inf
    assert out[0] == pytest.approx(ar2_loglik(th[0], y), rel=1e-14)
    with pytest.raises(ValueError):
        ar2_loglik(th[0], np.zeros(2))


def test_ar2_grid_argmax_near_truth():
    y = _simulate("ar2", AR2_TRUTH, 20000, seed=3)
    nodes = triangle_grid(in_ar2_triangle, 0.01)
    ll = ar2_loglik(nodes, y)
    assert np.linalg.norm(nodes[np.argmax(ll)] - AR2_TRUTH) < 0.05


def test_ma2_iid_reduction():
    y = np.random.default_rng(0).standard_normal(40)
    s = math.sqrt(1 + 0.3**2)
    assert ma2_loglik(np.zeros(2), y) == pytest.approx(norm.logpdf(y, scale=s).sum(), rel=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_ma2_matches_dense_oracle(seed):
    r = np.random.default_rng(seed)
    theta = get_model("ma2").sample_prior(r, 1)[0]
    y = r.standard_normal(50)
    col = np.zeros(50)
    col[:3] = [1 + theta[0] ** 2 + theta[1] ** 2 + 0.09, theta[0] * (1 + theta[1]), theta[1]]
    assert abs(ma2_loglik(theta, y) - gaussian_logpdf_dense(y, toeplitz(col))) < 1e-8


def test_ma2_outside_triangle():
    assert ma2_loglik(np.array([0.0, 1.5]), np.zeros(10)) == -np.inf


def test_log_density_wrapper():
    ld = LogDensity(lambda t: -0.5 * float(t @ t), lambda t: bool(in_ar2_triangle(t[None])[0]))
    assert ld([0.0, 0.0]) == 0.0
    assert ld([5.0, 0.0]) == -np.inf


# --------------------------------------------------------------------------
# g-and-k density
# --------------------------------------------------------------------------


def test_gandk_gaussian_reduction():
    x = np.linspace(-2, 8, 41)
    lp = gandk_logpdf((3.0, 1.5, 0.0, 0.0), x)
    assert np.allclose(np.exp(lp), norm.pdf(x, 3.0, 1.5), rtol=1e-6)


def test_gandk_density_integrates_to_one():
    f = lambda x: float(np.exp(gandk_logpdf(GK_TRUTH, np.array([x]))[0]))
    total, _ = integrate.quad(f, -10, 50, points=[0, 2, 3, 5, 10], limit=400)
    assert abs(total - 1.0) < 1e-4


@pytest.mark.parametrize("z", [-2.0, 0.0, 2.0])
def test_gandk_change_of_variables(z):
    a, b, g, k = GK_TRUTH
    q = lambda t: a + b * (1 + 0.8 * math.tanh(g * t / 2)) * t * (1 + t * t) ** k
    # analytic derivative as an independent oracle
    th = math.tanh(g * z / 2)
    dq = b * (
        0.8 * (g / 2) * (1 - th * th) * z * (1 + z * z) ** k
        + (1 + 0.8 * th) * ((1 + z * z) ** k + z * k * (1 + z * z) ** (k - 1) * 2 * z)
    )
    f = math.exp(gandk_logpdf(GK_TRUTH, np.array([q(z)]))[0])
    assert f * dq == pytest.approx(norm.pdf(z), rel=1e-5)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.5, 5.0), st.floats(0.2, 3.0), st.floats(0.0, 5.0), st.floats(0.0, 1.0), st.floats(-2.5, 2.5)
)
def test_gandk_identity_over_prior_bulk(a, b, g, k, z):
    h = 1e-5
    q = lambda t: a + b * (1 + 0.8 * np.tanh(g * t / 2)) * t * (1 + t * t) ** k
    dq = (q(z + h) - q(z - h)) / (2 * h)
    f = math.exp(gandk_logpdf((a, b, g, k), np.array([q(z)]))[0])
    assert f * dq == pytest.approx(norm.pdf(z), rel=1e-5)


def test_gandk_unreachable_points_and_validation():
    lp = gandk_logpdf((0.0, 1.0, 0.0, 0.0), np.array([1e6, -1e6, np.nan]))
    assert np.all(lp == -np.inf)
    with pytest.raises(ValueError):
        gandk_logpdf((0.0, -1.0, 0.0, 0.0), np.zeros(1))
    assert gandk_loglik(np.array([0.0, -1.0, 0.0, 0.0]), np.zeros(3)) == -np.inf


# --------------------------------------------------------------------------
# grid posterior
# --------------------------------------------------------------------------


def test_flat_grid_posterior_is_uniform():
    nodes = triangle_grid(in_ma2_triangle, 0.05)
    gp = grid_posterior(lambda t: np.zeros(len(t)), nodes)
    assert np.allclose(gp.masses, 1 / len(nodes), rtol=1e-12)
    # the centroid of the MA(2) triangle (-2,1), (2,1), (0,-1) is (0, 1/3)
    assert np.allclose(gp.mean(), [0.0, 1 / 3], atol=0.02)


def test_grid_nodes_lie_inside():
    for support in (in_ar2_triangle, in_ma2_triangle):
        nodes = triangle_grid(support, 0.02)
        assert support(nodes).all() and len(nodes) > 1000


def test_grid_posterior_normalised_and_order_free():
    y = _simulate("ar2", AR2_TRUTH, 100, seed=4)
    nodes = triangle_grid(in_ar2_triangle, 0.02)
    gp = grid_posterior(lambda t: ar2_loglik(t, y), nodes)
    assert abs(math.fsum(gp.masses) - 1.0) < 1e-12 and np.all(gp.masses >= 0)
    perm = np.random.default_rng(0).permutation(len(nodes))
    gq = grid_posterior(lambda t: ar2_loglik(t, y), nodes[perm])
    assert np.allclose(gq.masses, gp.masses[perm], rtol=1e-12, atol=1e-300)


def test_grid_posterior_errors():
    nodes = triangle_grid(in_ar2_triangle, 0.1)
    with pytest.raises(ValueError, match="zero posterior"):
        grid_posterior(lambda t: np.full(len(t), -np.inf), nodes)
    with pytest.raises(ValueError, match="2-D"):
        grid_posterior(lambda t: np.zeros(len(t)), np.zeros((3, 3)))


def test_sample_grid_frequencies():
    gp = GridPosterior(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([0.2, 0.0, 0.8]))
    s = sample_grid(gp, 20000, np.random.default_rng(0))
    assert s.source == "reference"
    counts = np.bincount(s.draws[:, 0].astype(int), minlength=3)
    assert counts[1] == 0 and abs(counts[0] / 20000 - 0.2) < 0.01


def test_grid_agrees_with_metropolis():
    y = _simulate("ar2", AR2_TRUTH, 100, seed=5)
    gp = grid_posterior(lambda t: ar2_loglik(t, y), triangle_grid(in_ar2_triangle, 0.005))
    chain = rw_metropolis(
        lambda t: ar2_loglik(t, y), np.array([0.0, 0.0]), 40000, 0.1,
        np.random.default_rng(1), burn=2000, thin=20, adapt=True,
    )
    se = np.sqrt(np.diag(gp.cov()) / len(chain.draws))
    assert np.all(np.abs(chain.draws.mean(0) - gp.mean()) < 3 * se)


def test_reference_posterior_dispatch():
    y = _simulate("ma2", MA2_TRUTH, 100, seed=6)
    s = reference_posterior("ma2", y, 100, np.random.default_rng(0), step=0.02)
    assert s.draws.shape == (100, 2) and in_ma2_triangle(s.draws).all()
    with pytest.raises(ValueError):
        reference_posterior("gandk", y, 10, np.random.default_rng(0))


# --------------------------------------------------------------------------
# Metropolis
# --------------------------------------------------------------------------


def test_metropolis_gaussian_target():
    mu = np.array([1.0, -2.0])
    chain = rw_metropolis(lambda t: -0.5 * ((t - mu) ** 2).sum(), np.zeros(2), 20000, 1.0,
                          np.random.default_rng(0), burn=1000, thin=10)
    se = 1 / math.sqrt(len(chain.draws))
    assert np.all(np.abs(chain.draws.mean(0) - mu) < 3 * se * 2)
    assert 0.2 < chain.acceptance_rate < 0.8


def test_metropolis_small_scale_accepts_everything():
    chain = rw_metropolis(lambda t: -0.5 * float(t @ t), np.zeros(2), 2000, 1e-8, np.random.default_rng(0))
    assert chain.acceptance_rate > 0.999


def test_metropolis_determinism_and_adaptation():
    f = lambda t: -0.5 * float(t @ t) * 100
    a = rw_metropolis(f, np.zeros(2), 500, 5.0, np.random.default_rng(3), burn=1000, adapt=True)
    b = rw_metropolis(f, np.zeros(2), 500, 5.0, np.random.default_rng(3), burn=1000, adapt=True)
    assert np.array_equal(a.draws, b.draws)
    assert np.all(a.scale < 5.0)


def test_metropolis_errors():
    box = lambda t: 0.0 if np.all(np.abs(t) < 1e-3) else -np.inf
    with pytest.raises(ZeroAcceptance):
        rw_metropolis(box, np.zeros(2), 50, 100.0, np.random.default_rng(0))
    with pytest.raises(ValueError, match="initial"):
        rw_metropolis(box, np.ones(2), 50, 1.0, np.random.default_rng(0))


@pytest.mark.slow
def test_gandk_reference_chain():
    y = _simulate("gandk", GK_TRUTH, 1000, seed=7)
    chain = gandk_reference_posterior(y, 50, np.random.default_rng(0), burn=2000, thin=10)
    assert chain.draws.shape == (50, 4)
    assert 0.1 < chain.acceptance_rate < 0.6
    assert abs(chain.draws[:, 0].mean() - 3.0) < 0.3


# --------------------------------------------------------------------------
# Wasserstein and RMSE
# --------------------------------------------------------------------------


def test_wasserstein_examples():
    assert wasserstein(np.array([0.0, 2.0]), np.array([1.0, 3.0])) == 1.0
    a = np.random.default_rng(0).standard_normal((30, 2))
    assert wasserstein(a, a[::-1]) == 0.0
    s = PosteriorSample(a)
    assert wasserstein(s, s) == 0.0
    with pytest.raises(ValueError):
        wasserstein(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError, match="dimensions"):
        wasserstein(np.zeros((3, 2)), np.zeros((3, 1)))


def test_wasserstein_matches_bruteforce():
    r = np.random.default_rng(1)
    for _ in range(100):
        n = int(r.integers(1, 8))
        a, b = r.standard_normal((n, 2)), r.standard_normal((n, 2))
        assert wasserstein_assignment(a, b) == wasserstein_bruteforce(a, b)


def test_wasserstein_metric_properties():
    r = np.random.default_rng(2)
    for _ in range(100):
        a, b, c = (r.standard_normal((12, 2)) for _ in range(3))
        ab = wasserstein(a, b)
        assert ab == wasserstein(b, a)
        assert ab <= wasserstein(a, c) + wasserstein(c, b) + 1e-12
        assert ab > 0


def test_wasserstein_1d_fast_path_matches_solver():
    r = np.random.default_rng(3)
    for _ in range(100):
        n = int(r.integers(1, 40))
        a, b = r.standard_normal((n, 1)), r.standard_normal((n, 1))
        assert wasserstein_1d(a, b) == pytest.approx(wasserstein_assignment(a, b), rel=1e-14, abs=1e-15)


def test_wasserstein_subsamples_larger_set():
    a = np.arange(100.0)
    b = np.arange(1000.0) % 100
    w = wasserstein(a, b, np.random.default_rng(0))
    assert 0.0 <= w < 10.0
    assert w == wasserstein(a, b, np.random.default_rng(0))


def test_rmse_examples():
    truth = np.array([1.0, 2.0, 3.0, 4.0])
    assert rmse(truth[None], truth) == 0.0
    assert rmse([truth + 1], truth) == 2.0
    est = truth + np.random.default_rng(0).standard_normal((5, 4))
    assert rmse(truth + 3 * (est - truth), truth) == pytest.approx(3 * rmse(est, truth), rel=1e-13)
    with pytest.raises(ValueError):
        rmse(np.zeros((2, 3)), truth)
