"""Weighted order statistics, weighted quantiles and the check-loss objective.

All public indices are 1-based so that ``lower_value`` is ``X_(l)`` in the
usual order-statistic notation.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "WeightedSample",
    "QuantileSpec",
    "OrderedIndices",
    "QuantileEstimate",
    "DegenerateSampleError",
    "sort_with_weights",
    "lower_index",
    "upper_index",
    "ordered_indices",
    "weighted_quantile",
    "weighted_cdf",
    "check_loss",
    "objective",
    "objective_at_observations",
    "argmax_objective",
    "suboptimality_gap",
]


def _fsum(a) -> float:
    """Correctly rounded sum (independent of element order)."""
    return math.fsum(np.asarray(a, dtype=np.float64).tolist())


class DegenerateSampleError(ValueError):
    """Raised when a sample carries no positive weight."""


@dataclass(frozen=True)
class WeightedSample:
    """Observation values paired with nonnegative weights.

    Parameters
    ----------
    values : array_like
        Observations, length n >= 1.
    weights : array_like, optional
        Nonnegative weights of the same length. Defaults to all ones.
    """

    values: np.ndarray
    weights: np.ndarray = None  # type: ignore[assignment]
    is_sorted: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.weights is None:
            weights = np.ones_like(values)
        else:
            weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if values.size == 0:
            raise ValueError("sample is empty")
        if values.shape != weights.shape:
            raise ValueError(
                f"values and weights differ in length ({values.size} != {weights.size})"
            )
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(weights))):
            raise ValueError("values and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.values.size

    @property
    def total_weight(self) -> float:
        return _fsum(self.weights)

    @property
    def effective_size(self) -> float:
        """Kish effective sample size ``(sum w)^2 / sum w^2``."""
        total = self.total_weight
        return total * total / _fsum(self.weights * self.weights)


@dataclass(frozen=True)
class QuantileSpec:
    """Target probability ``p`` and interpolation weight ``gamma``.

    The estimate is ``(1 - gamma) * X_(l) + gamma * X_(u)``; the median
    corresponds to ``p = gamma = 0.5``.
    """

    p: float = 0.5
    gamma: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma!r}")


@dataclass(frozen=True)
class OrderedIndices:
    """1-based order-statistic indices ``l <= u <= L``, with ``L = min(l + 1, n)``."""

    l: int
    u: int
    L: int


@dataclass(frozen=True)
class QuantileEstimate:
    spec: QuantileSpec
    indices: OrderedIndices
    value: float
    lower_value: float
    upper_value: float
    total_weight: float
    kind: Optional[str] = None


def _sorted(sample: WeightedSample) -> WeightedSample:
    return sample if sample.is_sorted else sort_with_weights(sample)


def sort_with_weights(sample: WeightedSample) -> WeightedSample:
    """Sort by value, carrying each weight with its value.

    The sort is stable, so tied values keep their input order.
    """
    order = np.argsort(sample.values, kind="stable")
    return WeightedSample(sample.values[order], sample.weights[order], is_sorted=True)


def _total(weights: np.ndarray) -> float:
    total = _fsum(weights)
    if total <= 0.0:
        raise DegenerateSampleError("total weight is zero")
    return total


_SPLIT = 134217729.0  # 2**27 + 1


def _two_product(a: np.ndarray, b: float):
    """Error-free product: ``a * b == hi + lo`` exactly (Dekker/Veltkamp)."""
    hi = a * b
    c = _SPLIT * a
    a_hi = c - (c - a)
    a_lo = a - a_hi
    c = _SPLIT * b
    b_hi = c - (c - b)
    b_lo = b - b_hi
    lo = a_lo * b_lo - (((hi - a_hi * b_hi) - a_lo * b_hi) - a_hi * b_lo)
    return hi, lo


class _Threshold:
    """Exact test of ``sum(w[:j]) >= p * sum(w)`` on binary floats.

    ``p * w_i`` is split into two floats with an exact sum, so the difference
    of both sides is an exact sum of floats; ``math.fsum`` rounds it correctly
    and rounding preserves sign.
    """

    def __init__(self, weights: np.ndarray, p: float):
        hi, lo = _two_product(weights, p)
        self.weights = weights
        self.neg_target = (-hi).tolist() + (-lo).tolist()

    def sign(self, j: int) -> float:
        """Sign of ``sum(w[:j]) - p * sum(w)`` for the first j (1-based) weights."""
        return math.fsum(self.weights[:j].tolist() + self.neg_target)


def _first_crossing(weights: np.ndarray, total: float, p: float, strict: bool,
                    threshold: Optional[_Threshold] = None) -> int:
    """0-based first j whose cumulative weight is >= p * total (> when strict).

    A plain cumulative sum locates the candidate; the decision is then made
    exactly, so the result does not depend on accumulation order or rounding.
    """
    n = weights.size
    threshold = threshold or _Threshold(weights, p)

    def crosses(j):
        d = threshold.sign(j + 1)
        return d > 0 if strict else d >= 0

    approx = np.cumsum(weights) / total
    side = "right" if strict else "left"
    j = min(int(np.searchsorted(approx, p, side=side)), n - 1)
    while j > 0 and crosses(j - 1):
        j -= 1
    while j < n - 1 and not crosses(j):
        j += 1
    return j


def lower_index(sample: WeightedSample, spec: QuantileSpec) -> int:
    """Smallest 1-based j whose cumulative weight fraction is at least p."""
    s = _sorted(sample)
    return _first_crossing(s.weights, _total(s.weights), spec.p, strict=False) + 1


def upper_index(sample: WeightedSample, spec: QuantileSpec) -> int:
    """Smallest 1-based j whose cumulative weight fraction exceeds p.

    Returns n when the fraction never strictly exceeds p before the end.
    """
    s = _sorted(sample)
    return _first_crossing(s.weights, _total(s.weights), spec.p, strict=True) + 1


def ordered_indices(sample: WeightedSample, spec: QuantileSpec) -> OrderedIndices:
    s = _sorted(sample)
    total = _total(s.weights)
    n = len(s)
    threshold = _Threshold(s.weights, spec.p)
    l = _first_crossing(s.weights, total, spec.p, strict=False, threshold=threshold) + 1
    u = _first_crossing(s.weights, total, spec.p, strict=True, threshold=threshold) + 1
    return OrderedIndices(l=l, u=u, L=min(l + 1, n))


def weighted_quantile(
    sample: WeightedSample, spec: QuantileSpec = QuantileSpec(), kind: Optional[str] = None
) -> QuantileEstimate:
    """Weighted p-quantile as a convex combination of two order statistics.

    Parameters
    ----------
    sample : WeightedSample
        Observations and nonnegative weights; need not be sorted.
    spec : QuantileSpec
        Target probability and interpolation weight.
    kind : str, optional
        Label carried through to the returned estimate.

    Returns
    -------
    QuantileEstimate
        ``value = (1 - gamma) * X_(l) + gamma * X_(u)``. With unit weights
        and ``p = gamma = 0.5`` this is the textbook median for odd and even n.

    Raises
    ------
    DegenerateSampleError
        If every weight is zero.
    """
    s = _sorted(sample)
    total = _total(s.weights)
    idx = ordered_indices(s, spec)
    lo = float(s.values[idx.l - 1])
    hi = float(s.values[idx.u - 1])
    if lo == hi or spec.gamma == 0.0:
        value = lo
    elif spec.gamma == 1.0:
        value = hi
    else:
        value = min(max((1.0 - spec.gamma) * lo + spec.gamma * hi, lo), hi)
    return QuantileEstimate(
        spec=spec,
        indices=idx,
        value=value,
        lower_value=lo,
        upper_value=hi,
        total_weight=total,
        kind=kind,
    )


def weighted_cdf(sample: WeightedSample, t: float) -> float:
    """Weighted empirical distribution function at ``t`` (right-continuous)."""
    total = _total(sample.weights)
    return _fsum(sample.weights[sample.values <= t]) / total


def check_loss(y, w, theta, p):
    """Negated weighted pinball loss ``w((1-p)I(y<=theta) - pI(y>theta))(y-theta)``.

    Always <= 0 and vanishes at ``y == theta``. Broadcasts over arrays.
    """
    y = np.asarray(y, dtype=np.float64)
    diff = y - theta
    slope = np.where(y <= theta, 1.0 - p, -p)
    out = np.asarray(w, dtype=np.float64) * slope * diff
    return float(out) if out.ndim == 0 else out


def objective(sample: WeightedSample, theta: float, p: float) -> float:
    """Average check loss ``M_n(theta)`` over the sample."""
    terms = check_loss(sample.values, sample.weights, theta, p)
    return _fsum(np.atleast_1d(terms)) / len(sample)


def objective_at_observations(sample: WeightedSample, p: float):
    """Evaluate ``M_n`` at every sorted observation in O(n log n).

    Uses prefix sums of ``w`` and ``w * y``; the check-loss terms split into
    those at or below the kink and those above it.

    Returns
    -------
    values : np.ndarray
        Sorted observations.
    m : np.ndarray
        ``M_n`` at each of them.
    """
    s = _sorted(sample)
    y, w = s.values, s.weights
    n = y.size
    # Ties must share the right-most prefix so I(y <= theta) counts them all.
    last = np.searchsorted(y, y, side="right") - 1
    cw = np.cumsum(w)[last]
    cwy = np.cumsum(w * y)[last]
    tw = cw[-1]
    twy = cwy[-1]
    below = cwy - y * cw
    above = (twy - cwy) - y * (tw - cw)
    m = ((1.0 - p) * below - p * above) / n
    return y, m


def argmax_objective(sample: WeightedSample, p: float) -> float:
    """Brute-force maximiser of ``M_n`` over the observation values.

    ``M_n`` is piecewise linear with kinks only at observations, so scanning
    them finds the supremum. Each candidate is evaluated directly with
    :func:`objective`, giving O(n^2) work; use on small samples.
    """
    _total(sample.weights)
    candidates = np.unique(sample.values)
    scores = [objective(sample, float(c), p) for c in candidates]
    return float(candidates[int(np.argmax(scores))])


def _scaled_ints(a: np.ndarray):
    """Exact integers ``k`` and one exponent ``e`` with ``a == k * 2**e``."""
    mant, expo = np.frexp(np.asarray(a, dtype=np.float64))
    mant = (mant * 2.0**53).astype(np.int64)
    expo = expo.astype(np.int64) - 53
    expo[mant == 0] = expo.max()
    shift = int(expo.min())
    return [int(m) << int(e - shift) for m, e in zip(mant.tolist(), expo.tolist())], shift


def suboptimality_gap(sample: WeightedSample, spec: QuantileSpec) -> float:
    """``n * (sup M_n - M_n(estimate))``, evaluated in exact arithmetic.

    The supremum is taken over every observation kink directly, without using
    the quantile indices. All inputs are binary floats, so scaling them onto a
    common power-of-two grid turns every sum into an exact integer sum; the
    result is therefore never negative and carries no rounding noise.
    """
    s = _sorted(sample)
    _total(s.weights)
    est = weighted_quantile(s, spec).value
    ys, yshift = _scaled_ints(np.append(s.values, est))
    ws, wshift = _scaled_ints(s.weights)
    est_int, ys = ys[-1], ys[:-1]
    pnum, pden = spec.p.as_integer_ratio()
    qnum = pden - pnum

    # Prefix sums of w and w*y; scaled by 2**wshift and 2**(wshift + yshift).
    cw, cwy = [0], [0]
    for w, y in zip(ws, ys):
        cw.append(cw[-1] + w)
        cwy.append(cwy[-1] + w * y)
    tw, twy = cw[-1], cwy[-1]

    def scaled_objective(theta, j):
        # n * M_n(theta) * pden / 2**(wshift + yshift), with j units at or below theta.
        below = cwy[j] - theta * cw[j]
        above = (twy - cwy[j]) - theta * (tw - cw[j])
        return qnum * below - pnum * above

    n = len(ys)
    best = None
    for k in range(n):
        if k + 1 < n and ys[k + 1] == ys[k]:
            continue
        value = scaled_objective(ys[k], k + 1)
        best = value if best is None else max(best, value)
    j_est = int(np.searchsorted(s.values, est, side="right"))
    at_est = scaled_objective(est_int, j_est)
    diff = max(best, at_est) - at_est
    return float(Fraction(diff, pden) * Fraction(2) ** (wshift + yshift))
