"""Asymptotic variances of the three quantile estimators.

For a target probability p with density f at the true quantile,

    V    = p (1 - p) / f^2
    V_A  = V + Delta_A
    V_DI = V_A - Delta_DI

    Delta_A  = ((1-p)^2 E[(d-1) I(X <= q)] + p^2 E[(d-1) I(X > q)]) / f^2
    Delta_DI = ((1-p)^2 E[delta (d-1) I(X <= q)] + p^2 E[delta (d-1) I(X > q)]) / f^2

where d = 1/pi. At p = 0.5 these reduce to 1/(4 f^2), E[d-1]/(4 f^2) and
E[delta (d-1)]/(4 f^2).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np

from .core import QuantileSpec, WeightedSample, weighted_quantile
from .weights import (
    EstimatorKind,
    PopulationFrame,
    build_weighted_sample,
    integrated_weights,
    survey_weights,
)

logger = logging.getLogger(__name__)

__all__ = [
    "VarianceInputs",
    "AsymptoticVariance",
    "VarianceUnavailable",
    "theoretical_variances",
    "silverman_bandwidth",
    "kde_density_at",
    "plug_in_variances",
    "confidence_interval",
    "weighted_moment_triple",
]


class VarianceUnavailable(ValueError):
    """A variance component cannot be computed from the data supplied."""


@dataclass(frozen=True)
class VarianceInputs:
    p: float
    density_at_quantile: float
    m_le_A: float
    m_gt_A: float
    m_le_DI: float = 0.0
    m_gt_DI: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if not self.density_at_quantile > 0.0:
            raise ValueError("density at the quantile must be positive")
        for name in ("m_le_A", "m_gt_A", "m_le_DI", "m_gt_DI"):
            value = getattr(self, name)
            if value is not None and value < 0.0:
                raise ValueError(f"{name} must be nonnegative, got {value!r}")


@dataclass(frozen=True)
class AsymptoticVariance:
    """Asymptotic variances of sqrt(n)(estimate - truth) for the three estimators.

    ``V_DI`` and ``delta_DI`` are None when the big-data moments could not be
    formed; ``unavailable`` then says why.
    """

    V: float
    V_A: float
    V_DI: Optional[float]
    delta_A: float
    delta_DI: Optional[float]
    density: float
    source: str = "analytic"
    bandwidth: Optional[float] = None
    unavailable: dict = field(default_factory=dict)

    def for_kind(self, kind) -> Optional[float]:
        kind = EstimatorKind(kind)
        if kind is EstimatorKind.POPULATION:
            return self.V
        if kind is EstimatorKind.SURVEY:
            return self.V_A
        return self.V_DI

    def to_dict(self) -> dict:
        return asdict(self)


def theoretical_variances(inputs: VarianceInputs, source: str = "analytic") -> AsymptoticVariance:
    p = inputs.p
    f2 = inputs.density_at_quantile ** 2
    lo, hi = (1.0 - p) ** 2, p * p
    V = p * (1.0 - p) / f2
    delta_A = (lo * inputs.m_le_A + hi * inputs.m_gt_A) / f2
    V_A = V + delta_A
    if inputs.m_le_DI is None or inputs.m_gt_DI is None:
        delta_DI = V_DI = None
    else:
        delta_DI = (lo * inputs.m_le_DI + hi * inputs.m_gt_DI) / f2
        V_DI = V_A - delta_DI
    return AsymptoticVariance(
        V=V,
        V_A=V_A,
        V_DI=V_DI,
        delta_A=delta_A,
        delta_DI=delta_DI,
        density=inputs.density_at_quantile,
        source=source,
    )


def _weighted_sd(sample: WeightedSample) -> float:
    w = sample.weights / sample.total_weight
    mean = np.dot(w, sample.values)
    return math.sqrt(float(np.dot(w, (sample.values - mean) ** 2)))


def silverman_bandwidth(sample: WeightedSample) -> float:
    """Silverman's rule ``0.9 * min(sd, IQR / 1.34) * m^(-1/5)``.

    Standard deviation and interquartile range are weighted; ``m`` is the
    effective sample size. Falls back to the sd when the IQR is zero.
    """
    sd = _weighted_sd(sample)
    q1 = weighted_quantile(sample, QuantileSpec(0.25)).value
    q3 = weighted_quantile(sample, QuantileSpec(0.75)).value
    iqr = (q3 - q1) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    if not spread > 0:
        raise ValueError("cannot estimate a density from a sample with a single distinct value")
    return 0.9 * spread * sample.effective_size ** -0.2


def kde_density_at(
    sample: WeightedSample, point: float, bandwidth: Optional[float] = None
) -> float:
    """Weighted Gaussian kernel density estimate at a single point."""
    if np.all(sample.values == sample.values[0]):
        raise ValueError("cannot estimate a density from a sample with a single distinct value")
    h = silverman_bandwidth(sample) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    z = (point - sample.values) / h
    kern = np.exp(-0.5 * z * z)
    return float(np.dot(sample.weights, kern)) / (sample.total_weight * h * math.sqrt(2.0 * math.pi))


def plug_in_variances(
    frame: PopulationFrame,
    theta_hat: float,
    p: float = 0.5,
    density_from: EstimatorKind = EstimatorKind.INTEGRATED,
    bandwidth: Optional[float] = None,
) -> AsymptoticVariance:
    """Estimate the asymptotic variances from a single frame.

    The design moments are Horvitz-Thompson sums over the survey,
    ``n^-1 sum alpha d (d-1) I(x <= theta_hat)`` and its complement. The
    big-data moments ``n^-1 sum delta (d-1) I(.)`` need pi on every big-data
    unit; if any is missing they are reported as unavailable. The density at
    the quantile is a weighted KDE on the sample selected by ``density_from``.

    Raises
    ------
    VarianceUnavailable
        If the density estimate cannot be formed or is not positive.
    """
    n = frame.n
    d = frame.design_weights
    below = frame.x <= theta_hat
    survey = frame.alpha == 1

    if np.any(survey):
        ds = d[survey]
        if ds.max() > 100.0 * np.median(ds):
            warnings.warn(
                "design weights are highly dispersed (max > 100 x median); "
                "plug-in moments may be unstable",
                RuntimeWarning,
                stacklevel=2,
            )
    ht = np.where(survey, d * (d - 1.0), 0.0)
    m_le_A = float(np.sum(ht[below])) / n
    m_gt_A = float(np.sum(ht[~below])) / n

    unavailable = {}
    big = frame.delta == 1
    if np.any(np.isnan(frame.pi[big])):
        missing = int(np.sum(np.isnan(frame.pi[big])))
        unavailable["V_DI"] = (
            f"E[delta (d-1) I(X <= q)] and E[delta (d-1) I(X > q)] need pi on every "
            f"big-data unit; {missing} lack it"
        )
        m_le_DI = m_gt_DI = None
    else:
        bd = np.where(big, d - 1.0, 0.0)
        m_le_DI = float(np.sum(bd[below])) / n
        m_gt_DI = float(np.sum(bd[~below])) / n

    try:
        sample = build_weighted_sample(frame, density_from)
        if bandwidth is None:
            bandwidth = silverman_bandwidth(sample)
        f_hat = float(kde_density_at(sample, theta_hat, bandwidth))
    except ValueError as exc:
        raise VarianceUnavailable(f"density at the quantile: {exc}") from exc
    if not f_hat > 0:
        raise VarianceUnavailable("estimated density at the quantile is zero")

    inputs = VarianceInputs(p, f_hat, m_le_A, m_gt_A, m_le_DI, m_gt_DI)
    result = theoretical_variances(inputs, source="plug-in")
    return AsymptoticVariance(
        **{**asdict(result), "bandwidth": float(bandwidth), "unavailable": unavailable}
    )


def confidence_interval(theta_hat: float, variance: float, n: int, level: float = 0.95):
    """Normal-approximation interval ``theta_hat +/- z * sqrt(variance / n)``."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if n < 1:
        raise ValueError("n must be positive")
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    half = z * math.sqrt(variance / n)
    return theta_hat - half, theta_hat + half


def weighted_moment_triple(frame: PopulationFrame, y: float):
    """Population, survey and integrated averages of ``I(X <= y)``.

    Each is a mean over all n units, so the frame must be complete.
    """
    if not frame.is_complete:
        raise ValueError("moment triple needs every population unit stored")
    ind = (frame.x <= y).astype(np.float64)
    n = frame.n
    return (
        float(np.sum(ind)) / n,
        float(np.dot(survey_weights(frame), ind)) / n,
        float(np.dot(integrated_weights(frame), ind)) / n,
    )
