"""Fixed shift plus noise: does phi + W stay irregular?

Run: python demos/05_prevalence.py
"""
# %% imports
from irrlab import Seed
from irrlab import simulate as sim
from irrlab.labcli import prevalence_harness

noise = sim.GaussianModel.fbm(0.5)

# %% pass rate = fraction of draws with rho_hat above 1/(2H) - margin
for shift in ("zero", "polynomial", "trigonometric", "weierstrass"):
    r = prevalence_harness(shift, noise, M=10, n=2 ** 14, seed=Seed(16), margin=0.25)
    print(f"{shift:14s} threshold={r['threshold']:.2f}  pass rate={r['pass_rate']:.2f}  "
          f"inconclusive={r['inconclusive']}")
