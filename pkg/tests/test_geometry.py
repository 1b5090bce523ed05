import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from irrlab import InputError, SampledPath, Seed
from irrlab import core_path as cp
from irrlab import geometry as geo
from irrlab import simulate as sim
from irrlab import spectral as sp


def fbm(n=4096, seed=1, H=0.5, dim=1):
    return sim.simulate_gaussian(sim.GaussianModel.fbm(H, dim), n, 1.0, Seed(seed))


def line(n=1024, T=1.0):
    return SampledPath.from_function(lambda t: t, n, T)


# --- Hölder density ---------------------------------------------------------------

def test_constant_path_full_density():
    c = geo.holder_density(SampledPath(np.full(1025, 2.0)), 512, 0.5, 1.0, [0.25, 0.1, 0.02])
    np.testing.assert_array_equal(c.fraction, 1.0)


def test_line_quadratic_exponent_only_center():
    n = 1024
    c = geo.holder_density(line(n), 512, 2.0, 1.0, [0.25, 0.05, 0.01])
    K = np.floor(c.eps * n + 1e-9)
    np.testing.assert_allclose(c.fraction, 1 / (2 * K + 1))


def test_holder_density_validation():
    p = line(256)
    with pytest.raises(InputError):
        geo.holder_density(p, 128, 0.5, 1.0, [0.1, 0.2])
    with pytest.raises(InputError):
        geo.holder_density(p, 128, 0.5, 1.0, [0.005])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_holder_density_orthogonal_invariance(seed):
    p = fbm(1024, seed % 997, dim=3)
    O = ortho_group.rvs(3, random_state=seed % 2 ** 31)
    q = cp.transform(p, O, shift=[1.0, -2.0, 0.5])
    eps = [0.25, 0.06, 0.01]
    a = geo.holder_density(p, 300, 0.6, 1.0, eps).fraction
    b = geo.holder_density(q, 300, 0.6, 1.0, eps).fraction
    np.testing.assert_array_equal(a, b)


def test_density_csv(tmp_path):
    c = geo.holder_density(fbm(1024), 512, 0.75, 1.0, [0.1, 0.05])
    c.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "epsilon,fraction"


# --- roughness modulus ----------------------------------------------------------------

def test_line_modulus():
    n = 1024
    r = geo.roughness_modulus(line(n), 1.0, [0.25, 0.1, 0.05])
    K = np.ceil(r.eps * n - 1e-9) - 1
    np.testing.assert_allclose(r.values, K / n / r.eps, rtol=1e-12)


def test_constant_modulus_zero():
    r = geo.roughness_modulus(SampledPath(np.ones((257, 2))), 0.5, [0.1])
    assert r.values[0] == 0 and r.values[0] >= 0


def test_modulus_brute_force():
    p = fbm(256, 2, dim=2)
    U = sp.default_directions(2)
    e = 0.05
    K = int(np.ceil(e * 256)) - 1
    best = np.inf
    for v in U:
        x = p.values @ v
        for s in range(257):
            lo, hi = max(0, s - K), min(256, s + K)
            best = min(best, np.max(np.abs(x[lo:hi + 1] - x[s])))
    r = geo.roughness_modulus(p, 0.5, [e])
    assert r.values[0] == pytest.approx(best / e ** 0.5, rel=1e-12)


def test_modulus_direction_mismatch():
    with pytest.raises(InputError):
        geo.roughness_modulus(fbm(64), 0.5, [0.1], directions=[[1.0, 0.0]])


# --- p-variation -------------------------------------------------------------------------

def test_monotone_total_variation():
    assert geo.p_variation(line(1000, 2.5), 1.0).value == pytest.approx(2.5)


def test_line_square_variation_coarsest():
    assert geo.p_variation(line(512), 2.0).value == pytest.approx(1.0)


def test_p_variation_brute_force():
    import itertools
    x = np.random.default_rng(3).standard_normal(9)
    best = 0.0
    for r in range(8):
        for inner in itertools.combinations(range(1, 8), r):
            pts = (0,) + inner + (8,)
            best = max(best, sum(abs(x[b] - x[a]) ** 1.5 for a, b in zip(pts, pts[1:])))
    assert geo.p_variation(SampledPath(x), 1.5).value == pytest.approx(best)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_p_variation_monotone_in_refinement(seed, p):
    w = fbm(512, seed % 997)
    coarse = geo.p_variation(w, p, stride=4).value
    fine = geo.p_variation(w, p, stride=1).value
    assert fine >= coarse * (1 - 1e-12)


def test_p_variation_records_stride():
    r = geo.p_variation(fbm(4096), 2.0, max_nodes=512)
    assert r.stride == 8 and r.nodes == 513
    with pytest.raises(InputError):
        geo.p_variation(fbm(64), 2.0, max_nodes=8, stride=1)
    with pytest.raises(InputError):
        geo.p_variation(fbm(64), 0.0)


# --- dimensions ------------------------------------------------------------------------

def test_line_fourier_dimension():
    d = geo.fourier_dimension(line(4096), energy=False)
    assert d.estimate == pytest.approx(1.0, abs=0.1) and not d.inconclusive


def test_constant_fourier_dimension():
    d = geo.fourier_dimension(SampledPath(np.zeros(1025)), energy=False)
    assert d.estimate == 0.0 and abs(d.decay) < 1e-12


def test_fourier_dimension_rotation_invariant():
    p = fbm(2048, 4, dim=2)
    O = ortho_group.rvs(2, random_state=4)
    a = geo.fourier_dimension(p, energy=False, sub=2)
    b = geo.fourier_dimension(cp.transform(p, O), energy=False, sub=2,
                              directions=sp.default_directions(2) @ O.T)
    np.testing.assert_allclose(a.sups, b.sups, rtol=1e-9)


def test_fourier_dimension_json():
    d = geo.fourier_dimension(fbm(2048, 5), sub=2)
    doc = json.loads(d.to_json())
    assert len(doc["shells"]) == 13 and doc["energy_estimate"] is not None


def test_energy_dimension_line():
    # the occupation measure of w_t = t is Lebesgue on [0, 1]: finite energy for alpha < 1
    assert geo.energy_dimension(line(2 ** 14)) >= 0.7


def test_box_dimension_segment():
    p = SampledPath.from_function(lambda t: np.stack([t, 0.5 * t], axis=-1), 1024)
    assert geo.box_dimension(p).estimate == pytest.approx(1.0, abs=0.1)


def test_box_dimension_constant():
    d = geo.box_dimension(SampledPath(np.ones((65, 2))))
    assert d.estimate == 0 and d.inconclusive


def test_box_dimension_fbm_interval():
    assert geo.box_dimension(fbm(2 ** 14, 6)).estimate == pytest.approx(1.0, abs=0.1)


def test_box_needs_levels():
    with pytest.raises(InputError):
        geo.box_dimension(line(64), levels=[3, 4, 5])


# --- occupation window -----------------------------------------------------------------------

def test_line_window():
    n = 4096
    r = np.array([2.0 ** -7, 2.0 ** -5, 2.0 ** -3, 0.5])
    rep = geo.occupation_window(line(n), r)
    # count of grid s < 1 with |t - s| < r, maximized at interior t
    np.testing.assert_allclose(rep.W, (2 * r * n - 1) / n, atol=1e-12)
    assert rep.linear and rep.constant == pytest.approx(np.median(rep.W / (2 * r)))
    assert rep.spread < 1.02


def test_constant_window_not_linear():
    rep = geo.occupation_window(SampledPath(np.zeros(257)), [0.01, 0.1, 1.0])
    np.testing.assert_allclose(rep.W, 1.0)
    assert not rep.linear


@pytest.mark.parametrize("dim", [1, 2])
def test_window_large_radius(dim):
    p = fbm(512, 7, dim=dim)
    assert geo.occupation_window(p, [1e6]).W[0] == pytest.approx(1.0)


def test_fbm_window_stable():
    r = 2.0 ** -np.arange(3, 8)
    rep = geo.occupation_window(fbm(2 ** 14, 8), r)
    assert rep.linear


def test_window_partial_horizon():
    rep = geo.occupation_window(line(1024), [1e6], T=0.5)
    assert rep.W[0] == pytest.approx(0.5) and rep.horizon == 0.5
