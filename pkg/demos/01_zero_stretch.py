"""A series that drops to exactly zero for a while.

Twenty consecutive quarters are recorded as 0 (think of a price that was
frozen by regulation).  A plain trend-plus-noise model reads those zeros as
real observations and drags its trend towards 0; the zero-inflated model
attributes them to the zero process and keeps the trend where the data
before and after the gap put it.

Run:  python demos/01_zero_stretch.py
"""

# %% simulate one series with a zero stretch
import numpy as np

from zisv import Panel, Schedule, UniHyper, run_chain
from zisv.rng import rng_handle

rng = rng_handle(2024, 0)
T, lo, hi = 100, 40, 60
theta = 3.0 + np.cumsum(rng.standard_normal(T) * 0.05)
y = theta + 0.5 * rng.standard_normal(T)
y[lo:hi] = 0.0
panel = Panel.from_arrays(y[:, None], series_names=("price",))
print(f"{T} periods, exact zeros at t = {lo}..{hi - 1}")

# %% fit both models with a short schedule (the default is 12000 iterations)
hyper = UniHyper(schedule=Schedule(3000, 1000, 4))
zi = run_chain(panel, hyper, mode="zero_inflated", seed=1)
plain = run_chain(panel, hyper, mode="plain", seed=1)

# %% compare trends inside the stretch
stretch = slice(lo, hi)
z_trend = zi["theta"][:, 1:, 0].mean(0)
p_trend = plain["theta"][:, 1:, 0].mean(0)
p_zero = (1 / (1 + np.exp(-zi["pi"][:, 1:, 0]))).mean(0)

print(f"true trend in stretch      : {theta[stretch].mean():6.2f}")
print(f"zero-inflated trend mean   : {z_trend[stretch].mean():6.2f}")
print(f"plain trend mean           : {p_trend[stretch].mean():6.2f}")
print(f"P(zero) in stretch / outside: {p_zero[stretch].mean():.2f} / "
      f"{np.delete(p_zero, np.r_[stretch]).mean():.2f}")

# %% a coarse text plot of the two trends
for t in range(30, 70, 2):
    mark = "*" if lo <= t < hi else " "
    print(f"{t:3d}{mark} truth {theta[t]:5.2f}  zero-inflated {z_trend[t]:5.2f}  plain {p_trend[t]:5.2f}")
