import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from irrlab import InputError, SampledPath, Seed, UnsupportedError
from irrlab import simulate as sim


def batch(model, M, n, seed=0, T=1.0):
    return sim.simulate_batch(model, M, n, T, Seed(seed))


# --- models ---------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(variant="fbm", H=1.2), dict(variant="log_bm"),
                                dict(variant="nope"), dict(variant="fbm_sum", components=((0.3, 1), (0.5, 1)))])
def test_invalid_models(kw):
    with pytest.raises(InputError):
        sim.GaussianModel(**kw)


def test_stable_alpha_range():
    with pytest.raises(InputError):
        sim.StableModel(2.5)
    with pytest.raises(InputError):
        sim.StableModel(0.0)


def test_log_bm_horizon_cap():
    with pytest.raises(InputError):
        sim.simulate_gaussian(sim.GaussianModel.log_bm(1.0), 64, 0.5)


# --- determinism ------------------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.sampled_from(["brownian", "fbm", "integrated_fbm", "fbm_sum"]))
def test_same_seed_same_path(root, variant):
    m = {"brownian": sim.GaussianModel.brownian(2), "fbm": sim.GaussianModel.fbm(0.3, 2),
         "integrated_fbm": sim.GaussianModel.integrated_fbm(0.6), "fbm_sum":
         sim.GaussianModel.fbm_sum(Hs=[0.7, 0.4])}[variant]
    a = sim.simulate_gaussian(m, 64, 1.0, Seed(root))
    b = sim.simulate_gaussian(m, 64, 1.0, Seed(root))
    assert a == b


def test_batch_independent_of_threads():
    m = sim.GaussianModel.fbm(0.7)
    a = sim.simulate_batch(m, 12, 128, 1.0, Seed(5), threads=1)
    b = sim.simulate_batch(m, 12, 128, 1.0, Seed(5), threads=4)
    np.testing.assert_array_equal(a, b)


def test_stable_deterministic():
    m = sim.StableModel(1.2, "isotropic", 2)
    assert sim.simulate_stable(m, 64, 1.0, Seed(3)) == sim.simulate_stable(m, 64, 1.0, Seed(3))


# --- distributional checks -------------------------------------------------------------------

def test_fbm_half_increments_are_white():
    n, M = 256, 400
    X = batch(sim.GaussianModel.fbm(0.5), M, n, 11)[:, :, 0]
    inc = np.diff(X, axis=1).reshape(-1) * math.sqrt(n)
    assert abs(inc.var() - 1) < 4 * math.sqrt(2 / inc.size)
    d = np.diff(X, axis=1)
    r1 = np.mean(d[:, 1:] * d[:, :-1]) * n
    assert abs(r1) < 4 / math.sqrt(d[:, 1:].size)


def test_fbm_covariance_formula():
    H, n, M = 0.3, 128, 2000
    X = batch(sim.GaussianModel.fbm(H), M, n, 12)[:, :, 0]
    t = np.arange(n + 1) / n
    for i, j in [(16, 64), (64, 128), (100, 101), (8, 120)]:
        prod = X[:, i] * X[:, j]
        target = 0.5 * (t[i] ** (2 * H) + t[j] ** (2 * H) - abs(t[i] - t[j]) ** (2 * H))
        assert abs(prod.mean() - target) < 4 * prod.std() / math.sqrt(M)


def test_circulant_matches_cholesky():
    H, n, M = 0.3, 512, 4000
    m = sim.GaussianModel.fbm(H)
    a = np.array([sim.simulate_gaussian(m, n, 1.0, Seed(1, i)).values[-1, 0] for i in range(M)])
    b = np.array([sim.simulate_gaussian(m, n, 1.0, Seed(2, i), method="cholesky").values[-1, 0]
                  for i in range(M)])
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_self_similarity():
    H, M = 0.7, 4000
    m = sim.GaussianModel.fbm(H)
    a = batch(m, M, 64, 21, T=0.5)[:, -1, 0]
    b = batch(m, M, 64, 22, T=1.0)[:, -1, 0] * 2.0 ** -H
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_stationary_increments():
    X = batch(sim.GaussianModel.fbm(0.3), 1000, 128, 23)[:, :, 0]
    ref = X[:, 8] - X[:, 0]
    for s in (32, 64, 100):
        assert stats.ks_2samp(ref, X[:, s + 8] - X[:, s]).pvalue > 0.01


def test_stable_alpha_two_is_brownian_scale():
    X = sim.simulate_batch(sim.StableModel(2.0), 400, 64, 1.0, Seed(30))[:, :, 0]
    v1 = np.var(X[:, 8] - X[:, 0])
    v2 = np.var(X[:, 32] - X[:, 0])
    # E exp(i xi X) = exp(-t xi^2): variance 2t
    assert v1 == pytest.approx(2 * 8 / 64, rel=0.2)
    assert v2 / v1 == pytest.approx(4, rel=0.25)


def test_cauchy_characteristic_function():
    M = 100000
    x = sim._symmetric_stable(1.0, M, np.random.default_rng(4)) * 0.25
    for xi in (1, 2, 4):
        cf = np.mean(np.cos(xi * x))
        se = np.std(np.cos(xi * x)) / math.sqrt(M)
        assert abs(cf - math.exp(-0.25 * xi)) < 4 * se


def test_isotropic_stable_shared_scale():
    a, dt, M = 1.5, 0.125, 20000
    m = sim.StableModel(a, "isotropic", 2)
    X = sim.simulate_batch(m, M, 8, 1.0, Seed(31))[:, 1, :]
    cs = []
    for th in np.arange(6) * np.pi / 6:
        xi = 1.5 * np.array([np.cos(th), np.sin(th)])
        cf = np.mean(np.cos(X @ xi))
        cs.append(-math.log(cf) / (dt * 1.5 ** a))
    assert max(cs) / min(cs) < 1.1
    assert np.mean(cs) == pytest.approx(1.0, rel=0.05)


# --- conditional variances --------------------------------------------------------------

def test_brownian_conditional_variance():
    np.testing.assert_allclose(sim.conditional_variance(sim.GaussianModel.brownian(2), 0.2, 0.5),
                               0.3 * np.eye(2))


def test_fbm_constant_at_half_is_one():
    assert sim.fbm_lnd_constant(0.5) == pytest.approx(1.0)
    assert sim.mvn_lnd_constant(0.5) == pytest.approx(1.0)


@pytest.mark.parametrize("beta,lag", [(1.0, 0.1), (0.5, 0.01), (2.0, 0.3)])
def test_log_bm_variance_quadrature(beta, lag):
    # u = -log r turns the endpoint singularity into a smooth tail on [-log lag, inf)
    val, _ = integrate.quad(lambda u: u ** (-beta - 1), -math.log(lag), np.inf,
                            epsabs=1e-14, epsrel=1e-13)
    assert sim.log_bm_variance(beta, lag) == pytest.approx(val, rel=1e-10)


def test_tabulated_kernel_unsupported():
    m = sim.GaussianModel.moving_average(kernel=lambda r: r ** 0.2)
    with pytest.raises(UnsupportedError):
        sim.conditional_variance(m, 0.0, 0.5)


def test_empirical_brownian_conditional_variance():
    X = batch(sim.GaussianModel.brownian(), 1000, 64, 40)
    v = sim.empirical_conditional_variance(X, 48, [8, 16, 32])
    assert v[0, 0] == pytest.approx(48 / 64 - 32 / 64, rel=0.15)


def test_empirical_fbm_conditional_variance():
    H = 0.7
    X = batch(sim.GaussianModel.fbm(H), 2000, 256, 41)
    s = 128
    v = sim.empirical_conditional_variance(X, s + 4, [s - 4 * k for k in range(8)])
    target = sim.fbm_lnd_constant(H) * (4 / 256) ** (2 * H)
    assert v[0, 0] == pytest.approx(target, rel=0.15)


def test_deterministic_shift_keeps_conditional_variance():
    X = batch(sim.GaussianModel.fbm(0.4), 300, 64, 42)
    Y = X + np.sin(np.arange(65) / 7.0)[None, :, None]
    a = sim.empirical_conditional_variance(X, 40, [10, 20, 30])
    b = sim.empirical_conditional_variance(Y, 40, [10, 20, 30])
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_empirical_needs_samples():
    with pytest.raises(InputError):
        sim.empirical_conditional_variance(np.zeros((10, 9, 1)), 5, [1])


# --- controlled compositions -------------------------------------------------------------

def fbm(n=256, seed=7):
    return sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), n, 1.0, Seed(seed))


def test_add_zero_multiply_one():
    w = fbm()
    assert sim.controlled_compose(w, "add", 0.0) == w
    assert sim.controlled_compose(w, "multiply", 1.0) == w


def test_young_constant_integrand():
    w = fbm()
    z = sim.controlled_compose(w, "young_integral", 2.5)
    np.testing.assert_allclose(z.values, 2.5 * (w.values - w.values[0]), atol=1e-12)


def test_multiply_needs_nonzero():
    with pytest.raises(InputError):
        sim.controlled_compose(fbm(), "multiply", lambda t: t)


def test_grid_mismatch():
    with pytest.raises(InputError):
        sim.controlled_compose(fbm(256), "add", SampledPath(np.zeros(129)))
