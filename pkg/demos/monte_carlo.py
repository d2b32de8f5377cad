"""
Monte Carlo study
=================

Repeat the draw many times and compare the empirical variance of the scaled
errors with the asymptotic values. Set INTEGRATED_QUANTILES_THREADS to run
replications on several threads; the numbers do not change.
"""

from dataclasses import replace

from integrated_quantiles.simulation import (
    DesignSpec,
    ProbabilityModel,
    SimConfig,
    SuperpopulationSpec,
    consistency_sweep,
    run_monte_carlo,
)

cfg = SimConfig(SuperpopulationSpec.normal(),
                DesignSpec(ProbabilityModel.constant(0.5), ProbabilityModel.constant(0.5)),
                n=10_000, replications=300, seed=7)

# %%
result = run_monte_carlo(cfg)
for kind, s in result.summaries.items():
    print(f"{kind:>10}: var {s.var_scaled_error:.3f} (theory {s.theoretical_variance:.3f}), "
          f"coverage {s.coverage:.3f}")
print("integrated no worse than survey:", result.variance_ordering())

# %%
# Errors shrink as the population grows.
for row in consistency_sweep(replace(cfg, replications=100), [1_000, 10_000, 100_000]):
    print(row["n"], row["median_abs_error_integrated"], row["median_abs_diff_integrated"])
