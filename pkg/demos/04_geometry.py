"""Roughness, p-variation and dimensions of sample paths.

Run: python demos/04_geometry.py
"""
# %% imports
import numpy as np

from irrlab import Seed, SampledPath
from irrlab import simulate as sim
from irrlab import geometry as geo

w = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), 2 ** 16, 1.0, Seed(7))

# %% how often is the path 0.75-Hölder at a fixed point? less and less as eps shrinks
eps = 2.0 ** -np.arange(6, 11)
c = geo.holder_density(w, w.n // 2, 0.75, 1.0, eps)
for e, f in zip(c.eps, c.fraction):
    print(f"eps=2^{np.log2(e):.0f}  fraction={f:.3f}")

# %% p-variation: finite for p > 2, blows up under refinement for p < 2
for p in (1.5, 3.0):
    v = [geo.p_variation(w, p, max_nodes=k).value for k in (512, 1024, 2048, 4096)]
    print(f"p={p}: " + "  ".join(f"{x:.3f}" for x in v))

# %% dimensions: Fourier decay, energy and box counting
d = geo.fourier_dimension(w)
print(f"Fourier estimate {d.estimate:.2f} (energy {d.energy_estimate:.2f}), "
      f"box {geo.box_dimension(w).estimate:.2f}")
w2 = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5, 2), 2 ** 16, 1.0, Seed(8))
print(f"planar fBm Fourier estimate {geo.fourier_dimension(w2, energy=False).estimate:.2f}")

# %% the occupation window grows linearly in r for a path with bounded local time
r = 2.0 ** -np.arange(3, 8)
rep = geo.occupation_window(w, r)
print("W(r)/2r:", np.round(rep.W / (2 * r), 3), "linear:", rep.linear)
rep0 = geo.occupation_window(SampledPath(np.zeros(1025)), r)
print("constant path W(r):", rep0.W, "linear:", rep0.linear)
