"""
Asymptotic variance and confidence intervals
============================================

The scaled error sqrt(n) (theta_hat - theta_0) is asymptotically normal. The
survey adds design variance to the population variance; the big data removes
the part contributed by the units it covers.
"""

import math

from integrated_quantiles import (
    EstimatorKind,
    VarianceInputs,
    confidence_interval,
    estimate,
    plug_in_variances,
    theoretical_variances,
)
from integrated_quantiles.simulation import (
    DesignSpec,
    ProbabilityModel,
    SimConfig,
    SuperpopulationSpec,
    design_variances,
    generate_frame,
)

# %%
# Normal(0, 1) median with pi = 0.5 and half the population in the big data:
# pi / 2, pi and 3 pi / 4.
f0 = 1 / math.sqrt(2 * math.pi)
v = theoretical_variances(VarianceInputs(0.5, f0, 0.5, 0.5, 0.25, 0.25))
print(v.V, v.V_A, v.V_DI)

# %%
# On a single simulated population, plug-in variances use Horvitz-Thompson
# moments and a kernel density estimate at the quantile.
cfg = SimConfig(SuperpopulationSpec.lognormal(),
                DesignSpec(ProbabilityModel.constant(0.1), ProbabilityModel.constant(0.3)),
                n=100_000, seed=5)
frame = generate_frame(cfg, 0)
theta = estimate(frame, EstimatorKind.INTEGRATED).value
plug = plug_in_variances(frame, theta)
exact = design_variances(cfg)
print("plug-in  V_A, V_DI:", plug.V_A, plug.V_DI)
print("analytic V_A, V_DI:", exact.V_A, exact.V_DI)

# %%
# A 95% interval for the integrated median.
print(confidence_interval(theta, plug.V_DI, frame.n, 0.95))
