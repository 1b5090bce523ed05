"""Averaged phases along a path and the irregularity exponent they decay with.

Run: python demos/01_phi_and_irregularity.py
"""
# %% imports
import numpy as np

from irrlab import Seed, SampledPath
from irrlab import simulate as sim
from irrlab import spectral as sp
from irrlab import irregularity as irr

# %% a straight line has a closed form: |Phi_{s,t}(xi)| = |2 sin(xi (t - s) / 2) / xi|
line = SampledPath.from_function(lambda t: t, 1024)
for xi in (1.0, 10.0, 100.0):
    v = sp.phi(line, 0, 1024, [xi]).value
    print(f"line  xi={xi:6.1f}  |Phi|={abs(v):.6f}  closed form={abs(2 * np.sin(xi / 2) / xi):.6f}")

# %% Brownian-like paths oscillate harder: Phi decays like |xi|^(-1/(2H)) up to logs
w = sim.simulate_gaussian(sim.GaussianModel.fbm(0.5), 2 ** 16, 1.0, Seed(11))
freqs = sp.frequency_set(1, J=18)
tab = sp.phi_table(w, freqs, sp.IntervalFamily(irr.ESTIMATOR_LEVELS))
env = irr.envelope(tab, 0.5)
print("\nq        envelope(gamma=0.5)")
for q, e in zip(env.q[::4], env.values[::4]):
    print(f"{q:8.1f} {e:.4e}")

# %% fitted exponents over the gamma grid; theory says anything below 1/(2H) = 1
rep = irr.irregularity_report(tab)
for g, r, r2 in zip(rep.gammas, rep.rho, rep.r2):
    print(f"gamma={g:.2f}  rho_hat={r:.3f}  R2={r2:.3f}")
print(f"best rho_hat={rep.rho_best:.3f}  delta*={rep.delta_star:.3f}")

# %% the same estimator across Hurst indices (a handful of paths each)
# for small H the grid floor caps the fit window [8, 512], so rho_hat saturates below 1/(2H)
for H in (0.3, 0.5, 0.75):
    r = [irr.irregularity_report(sim.simulate_gaussian(sim.GaussianModel.fbm(H), 2 ** 15, 1.0,
                                                       Seed(100 + i))).rho_best for i in range(5)]
    print(f"H={H}: median rho_hat={np.median(r):.3f}  1/(2H)={1 / (2 * H):.3f}")
