"""
Survey and integrated estimators
================================

A population of size n carries a probability survey (alpha = 1, inclusion
probability pi) and a big-data source (delta = 1) that covers part of the
population without a known design. The survey estimator weights sampled units
by 1 / pi. The integrated estimator gives big-data units weight 1 and the
remaining survey units their design weight.
"""

import numpy as np

from integrated_quantiles import PopulationFrame, estimate_all

# %%
# A small population, written out unit by unit.
frame = PopulationFrame(
    x=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    pi=[0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
    alpha=[1, 0, 1, 0, 1, 1],
    delta=[0, 1, 1, 1, 0, 0],
)
for kind, est in estimate_all(frame).items():
    print(f"{kind:>10}: {est.value}")

# %%
# Draw a larger population where bigger values are more likely to be surveyed
# and less likely to appear in the big data.
rng = np.random.default_rng(1)
n = 50_000
x = rng.lognormal(size=n)
pi = np.clip(1 / (1 + np.exp(-(-2 + 0.6 * x))), 0.01, 1)
alpha = (rng.random(n) < pi).astype(int)
delta = (rng.random(n) < 1 / (1 + np.exp(0.5 + 0.5 * x))).astype(int)
frame = PopulationFrame(x, pi, alpha, delta)

# The naive big-data median is biased; the design-based ones are not.
print("big data only:", np.median(x[delta == 1]))
for kind, est in estimate_all(frame).items():
    print(f"{kind:>10}:", est.value)
print("truth (median of LogNormal(0, 1)): 1.0")
