"""Population, Horvitz-Thompson survey and integrated weights.

A :class:`PopulationFrame` stores one row per observed unit: the value, its
survey inclusion probability (NaN when unknown), survey membership ``alpha``
and big-data membership ``delta``. Units outside both sources may be left
out; ``n`` keeps the population size.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .core import (
    DegenerateSampleError,
    QuantileEstimate,
    QuantileSpec,
    WeightedSample,
    weighted_quantile,
)

logger = logging.getLogger(__name__)

__all__ = [
    "EstimatorKind",
    "UnitRecord",
    "PopulationFrame",
    "survey_weight",
    "integrated_weight",
    "survey_weights",
    "integrated_weights",
    "build_weighted_sample",
    "estimate",
    "estimate_all",
]


class EstimatorKind(str, enum.Enum):
    POPULATION = "population"
    SURVEY = "survey"
    INTEGRATED = "integrated"


@dataclass(frozen=True)
class UnitRecord:
    x: float
    pi: Optional[float] = None
    alpha: int = 0
    delta: int = 0

    def __post_init__(self):
        if self.alpha not in (0, 1):
            raise ValueError(f"alpha must be 0 or 1, got {self.alpha!r}")
        if self.delta not in (0, 1):
            raise ValueError(f"delta must be 0 or 1, got {self.delta!r}")
        if self.pi is not None and not (0.0 < self.pi <= 1.0):
            raise ValueError(f"pi must lie in (0, 1], got {self.pi!r}")
        if self.alpha == 1 and self.pi is None:
            raise ValueError("survey unit (alpha=1) requires an inclusion probability")


def survey_weight(unit: UnitRecord) -> float:
    """Horvitz-Thompson weight ``alpha / pi`` (zero off the survey)."""
    if unit.alpha == 0:
        return 0.0
    if not unit.pi:
        raise ValueError("survey unit (alpha=1) requires a positive inclusion probability")
    return 1.0 / unit.pi


def integrated_weight(unit: UnitRecord) -> float:
    """``delta + (1 - delta) * survey_weight``; big-data units count once."""
    if unit.delta == 1:
        return 1.0
    return survey_weight(unit)


class PopulationFrame:
    """Column store of unit records.

    Parameters
    ----------
    x : array_like
        Observed values.
    pi : array_like, optional
        Inclusion probabilities in (0, 1]; NaN where unknown.
    alpha, delta : array_like
        0/1 membership of the survey and of the big-data source. A missing
        ``delta`` is treated as all zeros, with a warning.
    n : int, optional
        Population size; defaults to the number of stored units.
    """

    def __init__(self, x, pi=None, alpha=None, delta=None, n: Optional[int] = None):
        x = np.asarray(x, dtype=np.float64).ravel()
        size = x.size
        if size == 0:
            raise ValueError("frame holds no units")
        if pi is None:
            pi = np.full(size, np.nan)
        pi = np.asarray(pi, dtype=np.float64).ravel()
        if alpha is None:
            raise ValueError("alpha (survey membership) is required")
        alpha = np.asarray(alpha).ravel()
        if delta is None:
            logger.warning("delta column absent; treating every unit as outside the big data")
            delta = np.zeros(size, dtype=np.int8)
        delta = np.asarray(delta).ravel()
        for name, col in (("pi", pi), ("alpha", alpha), ("delta", delta)):
            if col.size != size:
                raise ValueError(f"{name} has {col.size} entries, expected {size}")
        if not np.all(np.isfinite(x)):
            raise ValueError("values must be finite")
        for name, col in (("alpha", alpha), ("delta", delta)):
            if not np.all((col == 0) | (col == 1)):
                raise ValueError(f"{name} must be 0/1")
        known = ~np.isnan(pi)
        if np.any((pi[known] <= 0.0) | (pi[known] > 1.0)):
            raise ValueError("pi must lie in (0, 1]")
        if np.any((alpha == 1) & ~known):
            raise ValueError("survey units (alpha=1) require an inclusion probability")
        if n is None:
            n = size
        if n < size:
            raise ValueError(f"population size {n} is below the {size} stored units")

        self.x = x
        self.pi = pi
        self.alpha = alpha.astype(np.int8)
        self.delta = delta.astype(np.int8)
        self.n = int(n)
        for arr in (self.x, self.pi, self.alpha, self.delta):
            arr.setflags(write=False)

    @classmethod
    def from_units(cls, units: Iterable[UnitRecord], n: Optional[int] = None) -> "PopulationFrame":
        units = list(units)
        return cls(
            x=[u.x for u in units],
            pi=[np.nan if u.pi is None else u.pi for u in units],
            alpha=[u.alpha for u in units],
            delta=[u.delta for u in units],
            n=n,
        )

    def __len__(self) -> int:
        return self.x.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PopulationFrame):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.pi, other.pi, equal_nan=True)
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.delta, other.delta)
        )

    def __repr__(self) -> str:
        return f"PopulationFrame(stored={len(self)}, n={self.n})"

    @property
    def is_complete(self) -> bool:
        return len(self) == self.n

    @property
    def units(self) -> Iterator[UnitRecord]:
        for x, pi, a, d in zip(self.x, self.pi, self.alpha, self.delta):
            yield UnitRecord(float(x), None if math.isnan(pi) else float(pi), int(a), int(d))

    @property
    def design_weights(self) -> np.ndarray:
        """``1 / pi``; NaN where pi is unknown."""
        return 1.0 / self.pi


def survey_weights(frame: PopulationFrame) -> np.ndarray:
    d = frame.design_weights
    return np.where(frame.alpha == 1, d, 0.0)


def integrated_weights(frame: PopulationFrame) -> np.ndarray:
    return np.where(frame.delta == 1, 1.0, survey_weights(frame))


def frame_weights(frame: PopulationFrame, kind: EstimatorKind) -> np.ndarray:
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.POPULATION:
        if not frame.is_complete:
            raise ValueError(
                f"population estimate needs all {frame.n} units, frame stores {len(frame)}"
            )
        return np.ones(len(frame))
    if kind is EstimatorKind.SURVEY:
        return survey_weights(frame)
    return integrated_weights(frame)


def build_weighted_sample(frame: PopulationFrame, kind: EstimatorKind) -> WeightedSample:
    """Weighted sample for one estimator; zero-weight units are dropped."""
    w = frame_weights(frame, kind)
    keep = w > 0
    if not np.any(keep):
        raise DegenerateSampleError(f"{EstimatorKind(kind).value} weights are all zero")
    return WeightedSample(frame.x[keep], w[keep])


def estimate(
    frame: PopulationFrame, kind: EstimatorKind, spec: QuantileSpec = QuantileSpec()
) -> QuantileEstimate:
    kind = EstimatorKind(kind)
    return weighted_quantile(build_weighted_sample(frame, kind), spec, kind=kind.value)


def estimate_all(frame: PopulationFrame, spec: QuantileSpec = QuantileSpec()) -> dict:
    return {kind: estimate(frame, kind, spec) for kind in EstimatorKind}
