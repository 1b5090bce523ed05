import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irrlab import InputError, SampledPath, Seed
from irrlab import core_path as cp
from irrlab import simulate as sim
from irrlab import spectral as sp


def linear(n=64, T=1.0):
    return SampledPath.from_function(lambda t: t, n, T)


def bm(n=1024, seed=1, dim=1):
    return sim.simulate_gaussian(sim.GaussianModel.fbm(0.5, dim), n, 1.0, Seed(seed))


def brute_holder(path, delta, K=None):
    w, dt = path.values, path.dt
    K = path.n if K is None else K
    best = 0.0
    for i in range(path.n + 1):
        for j in range(i + 1, min(path.n, i + K) + 1):
            best = max(best, np.linalg.norm(w[j] - w[i]) / ((j - i) * dt) ** delta)
    return best


# --- construction ----------------------------------------------------------------

def test_path_is_immutable():
    p = linear()
    with pytest.raises(ValueError):
        p.values[0, 0] = 1.0
    with pytest.raises(AttributeError):
        p.horizon = 2.0


@pytest.mark.parametrize("vals", [np.zeros((2, 1)), np.zeros((5, 4)), np.array([0, np.nan, 1.0])])
def test_bad_values_rejected(vals):
    with pytest.raises(InputError):
        SampledPath(vals)


def test_bad_horizon_rejected():
    with pytest.raises(InputError):
        SampledPath(np.zeros(5), 0.0)


def test_node_lookup():
    p = linear(8, 2.0)
    assert p.node(0.5) == 2
    with pytest.raises(InputError):
        p.node(0.3)


# --- Hölder seminorm ----------------------------------------------------------------

def test_constant_path_seminorm_zero():
    p = SampledPath(np.full(33, 2.5))
    assert cp.holder_seminorm(p, 0.5).seminorm == 0.0


def test_linear_path_lipschitz_seminorm_one():
    assert cp.holder_seminorm(linear(), 1.0).seminorm == pytest.approx(1.0, abs=1e-12)


def test_seminorm_matches_pair_scan():
    p = bm(256, 3)
    for K in (4, 32, 256):
        est = cp.holder_seminorm(p, 0.45, K * p.dt)
        assert est.seminorm == pytest.approx(brute_holder(p, 0.45, K), rel=1e-12)


def test_seminorm_monotone_in_lag():
    p = bm(512, 4)
    vals = [cp.holder_seminorm(p, 0.45, k * p.dt).seminorm for k in (1, 2, 8, 64, 512)]
    assert np.all(np.diff(vals) >= 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * np.pi), st.integers(0, 10 ** 6))
def test_rotation_preserves_seminorm(a, seed):
    p = bm(128, seed % 1000, dim=2)
    O = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    q = cp.transform(p, O, [1.0, -2.0])
    assert cp.holder_seminorm(q, 0.5).seminorm == pytest.approx(cp.holder_seminorm(p, 0.5).seminorm,
                                                                 rel=1e-10)


# --- rescale ------------------------------------------------------------------------

def test_rescale_identity():
    p = bm(64)
    assert cp.rescale(p, 1.0, 0.5, 0.7) == p


def test_rescale_exponent_cancels_on_linear_path():
    p = linear(64)
    q = cp.rescale(p, 0.5, 0.5, 0.5)
    # lam^{-(1-gamma)/rho} = 2, so the values are 2 * (t/2) = t on the new grid
    np.testing.assert_allclose(q.values[:, 0], q.times(), atol=1e-15)


def test_rescale_index_arithmetic():
    p = bm(128, 9)
    q = cp.rescale(p, 0.5, 0.75, 1.0)
    assert q.n == 64 and q.horizon == p.horizon
    np.testing.assert_allclose(q.values, 2 ** 0.25 * p.values[:65], rtol=1e-15)


def test_rescale_needs_integral_nodes():
    with pytest.raises(InputError):
        cp.rescale(bm(100), 1 / 3, 0.5, 1.0)


# --- transform and restrict ----------------------------------------------------------

def test_transform_identity():
    p = bm(64, dim=2)
    assert cp.transform(p, np.eye(2), [0, 0]) == p


def test_reflection_conjugates_phi():
    p = bm(256, 5)
    q = cp.transform(p, -np.eye(1))
    a = sp.phi(p, 3, 200, [7.0]).value
    b = sp.phi(q, 3, 200, [7.0]).value
    assert b == pytest.approx(np.conj(a), abs=1e-13)


def test_rotation_moves_frequency():
    p = bm(256, 6, dim=2)
    O = np.array([[0.0, -1.0], [1.0, 0.0]])
    xi = np.array([3.0, -1.5])
    a = sp.phi(cp.transform(p, O), 0, 256, xi).value
    b = sp.phi(p, 0, 256, O.T @ xi).value
    assert a == pytest.approx(b, abs=1e-12)


def test_transform_dimension_mismatch():
    with pytest.raises(InputError):
        cp.transform(bm(16, dim=2), np.eye(3))


def test_restrict_full_range_identity():
    p = bm(64)
    assert cp.restrict(p, 0, 64) == p


def test_restrict_composes():
    p = bm(256)
    a = cp.restrict(cp.restrict(p, 16, 200), 10, 100)
    b = cp.restrict(p, 26, 116)
    assert a == b


def test_restrict_linear_second_half():
    p = linear(64)
    q = cp.restrict(p, 32, 64)
    assert q.horizon == pytest.approx(0.5)
    np.testing.assert_allclose(q.values[:, 0], q.times() + 0.5, atol=1e-15)


def test_restrict_empty_range():
    with pytest.raises(InputError):
        cp.restrict(bm(64), 10, 10)


# --- I/O ------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(2, 40), st.floats(0.1, 10.0))
def test_binary_roundtrip(tmp_path_factory, d, n, T):
    g = np.random.default_rng(n * d)
    p = SampledPath(g.standard_normal((n + 1, d)), T)
    f = tmp_path_factory.mktemp("bin") / "p.path"
    cp.write_binary(p, f)
    assert cp.read_binary(f) == p
    assert f.read_bytes()[:16] == b"IRRLABPATHv1\0\0\0\0"


def test_csv_roundtrip(tmp_path):
    p = bm(32, dim=3)
    cp.write_csv(p, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "t,x1,x2,x3"
    q = cp.read_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(q.values, p.values)


def test_bad_magic(tmp_path):
    (tmp_path / "x.path").write_bytes(b"NOTAPATH" * 8)
    with pytest.raises(InputError):
        cp.read_binary(tmp_path / "x.path")
