"""Checking the sampler against its own prior.

Drawing parameters from the prior, or alternating "simulate data given
parameters" with "one Gibbs sweep given data", must give the same joint
law.  Any wrong conditional shows up as a large z-score.  A sampler with a
deliberately broken trend-variance step is run alongside for contrast.

Run:  python demos/03_getting_it_right.py   (about two minutes)
"""

# %% correct sampler
import numpy as np

from zisv.geweke import geweke_uni

ok = geweke_uni(T=12, n_chains=50, n_sweeps=400, seed=1, n_marginal=100_000)
print(f"correct sampler : {ok.pass_fraction:.0%} of |z| < 4, max |z| = {np.abs(ok.z).max():.1f}")

# %% broken sampler
bad = geweke_uni(T=12, n_chains=50, n_sweeps=400, seed=1, n_marginal=100_000, mutate=True)
print(f"broken sampler  : {bad.pass_fraction:.0%} of |z| < 4, max |z| = {np.abs(bad.z).max():.1f}")

# %% the statistics that expose the bug
worst = sorted(bad.rows, key=lambda r: -abs(r[3]))[:5]
print("\nstatistic              prior mean  Gibbs mean       z")
for name, m1, m2, z in worst:
    print(f"{name:22s} {m1:10.4f} {m2:11.4f} {z:7.1f}")
