"""Averaging a drift along a path, on the Fourier side and on a grid.

Run: python demos/02_averaging.py
"""
# %% imports
import numpy as np

from irrlab import Seed
from irrlab import simulate as sim
from irrlab import spectral as sp
from irrlab import averaging as av

w = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5, 2), 4096, 1.0, Seed(3))

# %% a band-limited drift: each mode is multiplied by Phi_{s,t}(xi)
b = sp.SpectralField.from_modes([[1.0, 0.5], [-2.0, 1.0], [0.5, -3.0]], [1.0, 0.5j, 0.3 - 0.2j])
spec = av.average_spectral(w, b, 0.0, 1.0).spectral
print("averaged coefficients:", np.round(spec.coef[:3], 4))

# %% the grid route convolves the occupation density with the sampled drift
dens = sp.occupation_density(w, m=64)
n = np.ceil(6 / dens.h).astype(int)
bg = av.GriddedField.sample(b, -n * dens.h / 2, dens.h, n)
g = av.average_grid(dens, bg, "valid")
X = np.stack(np.meshgrid(g.points(0), g.points(1), indexing="ij"), axis=-1)
err = np.max(np.abs(g.values - spec(X)))
print(f"grid vs spectral: max diff {err:.2e}  (CIC tolerance {av.cic_tolerance(b, dens):.2e})")

# %% averaging with a constant path only rescales: T^0 b = (t - s) b
zero = av.average_spectral(sim.SampledPath(np.zeros((65, 2))), b, 0.25, 0.75).spectral
print("zero path ratio:", np.round((zero.coef / b.coef).real, 12)[:3])

# %% regularity gain: the averaged field is smoother by roughly rho derivatives
w1 = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), 2 ** 14, 1.0, Seed(4))
for gain in (0.0, 0.5, 0.8):
    est = av.regularity_gain(w1, 0.0, 2, 16, 0.55, Seed(5), rho_gain=gain)
    print(f"rho_gain={gain}: max ratio {est.max:.3f}  median {est.median:.3f}")
