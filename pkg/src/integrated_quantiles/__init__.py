"""Population, survey and integrated (big data + survey) weighted quantile estimators."""

from .asymptotics import (
    AsymptoticVariance,
    VarianceInputs,
    VarianceUnavailable,
    confidence_interval,
    kde_density_at,
    plug_in_variances,
    silverman_bandwidth,
    theoretical_variances,
    weighted_moment_triple,
)
from .core import (
    DegenerateSampleError,
    OrderedIndices,
    QuantileEstimate,
    QuantileSpec,
    WeightedSample,
    argmax_objective,
    check_loss,
    lower_index,
    objective,
    objective_at_observations,
    ordered_indices,
    sort_with_weights,
    suboptimality_gap,
    upper_index,
    weighted_cdf,
    weighted_quantile,
)
from .weights import (
    EstimatorKind,
    PopulationFrame,
    UnitRecord,
    build_weighted_sample,
    estimate,
    estimate_all,
    integrated_weight,
    integrated_weights,
    survey_weight,
    survey_weights,
)

__version__ = "0.1.0"
