"""Monte Carlo studies of the population, survey and integrated estimators.

Each replication draws an i.i.d. superpopulation sample, inclusion
probabilities and big-data membership from a :class:`DesignSpec`, then a
Poisson survey (independent Bernoulli(pi) draws). Every replication owns a
random stream keyed on ``(seed, n, index, attempt)``, so results do not depend
on the number of workers or on scheduling.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .asymptotics import (
    AsymptoticVariance,
    VarianceInputs,
    VarianceUnavailable,
    confidence_interval,
    plug_in_variances,
    theoretical_variances,
)
from .core import DegenerateSampleError, QuantileSpec, suboptimality_gap
from .weights import EstimatorKind, PopulationFrame, build_weighted_sample, estimate

__all__ = [
    "SuperpopulationSpec",
    "ProbabilityModel",
    "DesignSpec",
    "SimConfig",
    "KindSummary",
    "SimResult",
    "ReplicationOutcome",
    "NonUniqueQuantileError",
    "true_quantile",
    "design_variances",
    "generate_frame",
    "run_replication",
    "run_monte_carlo",
    "consistency_sweep",
    "suboptimality_sweep",
    "default_workers",
]

KINDS = tuple(EstimatorKind)
WORKERS_ENV = "INTEGRATED_QUANTILES_THREADS"
MAX_ATTEMPTS = 100
_STD_NORMAL = NormalDist()


class NonUniqueQuantileError(ValueError):
    """The superpopulation quantile is not unique (flat CDF at p)."""


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


_FAMILY_PARAMS = {
    "normal": ("mu", "sigma"),
    "lognormal": ("mu", "sigma"),
    "exponential": ("rate",),
    "uniform": ("low", "high"),
    "bernoulli": ("q",),
}


@dataclass(frozen=True)
class SuperpopulationSpec:
    """Distribution generating the population values.

    ``family`` is one of normal(mu, sigma), lognormal(mu, sigma),
    exponential(rate), uniform(low, high) or bernoulli(q). Bernoulli has no
    density and exists to show what happens when the quantile is not unique.
    """

    family: str = "normal"
    params: dict = field(default_factory=lambda: {"mu": 0.0, "sigma": 1.0})

    def __post_init__(self):
        if self.family not in _FAMILY_PARAMS:
            raise ValueError(f"unknown family {self.family!r}")
        expected = set(_FAMILY_PARAMS[self.family])
        if set(self.params) != expected:
            raise ValueError(f"{self.family} takes parameters {sorted(expected)}")
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        p = self.params
        if self.family in ("normal", "lognormal") and not p["sigma"] > 0:
            raise ValueError("sigma must be positive")
        if self.family == "exponential" and not p["rate"] > 0:
            raise ValueError("rate must be positive")
        if self.family == "uniform" and not p["low"] < p["high"]:
            raise ValueError("uniform needs low < high")
        if self.family == "bernoulli" and not 0 < p["q"] < 1:
            raise ValueError("q must lie in (0, 1)")

    @classmethod
    def normal(cls, mu=0.0, sigma=1.0):
        return cls("normal", {"mu": mu, "sigma": sigma})

    @classmethod
    def lognormal(cls, mu=0.0, sigma=1.0):
        return cls("lognormal", {"mu": mu, "sigma": sigma})

    @classmethod
    def exponential(cls, rate=1.0):
        return cls("exponential", {"rate": rate})

    @classmethod
    def uniform(cls, low=0.0, high=1.0):
        return cls("uniform", {"low": low, "high": high})

    @classmethod
    def bernoulli(cls, q=0.5):
        return cls("bernoulli", {"q": q})

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.family == "normal":
            return rng.normal(p["mu"], p["sigma"], size)
        if self.family == "lognormal":
            return rng.lognormal(p["mu"], p["sigma"], size)
        if self.family == "exponential":
            return rng.exponential(1.0 / p["rate"], size)
        if self.family == "uniform":
            return rng.uniform(p["low"], p["high"], size)
        return (rng.random(size) < p["q"]).astype(np.float64)

    def quantile(self, u: float) -> float:
        p = self.params
        if self.family == "normal":
            return p["mu"] + p["sigma"] * _STD_NORMAL.inv_cdf(u)
        if self.family == "lognormal":
            return math.exp(p["mu"] + p["sigma"] * _STD_NORMAL.inv_cdf(u))
        if self.family == "exponential":
            return -math.log1p(-u) / p["rate"]
        if self.family == "uniform":
            return p["low"] + (p["high"] - p["low"]) * u
        if u == 1.0 - p["q"]:
            raise NonUniqueQuantileError(
                f"every value in [0, 1] is a {u}-quantile of Bernoulli({p['q']}); "
                "the quantile function is discontinuous there"
            )
        return 0.0 if u < 1.0 - p["q"] else 1.0

    def density(self, x: float) -> float:
        p = self.params
        if self.family == "normal":
            return NormalDist(p["mu"], p["sigma"]).pdf(x)
        if self.family == "lognormal":
            if x <= 0:
                return 0.0
            return NormalDist(p["mu"], p["sigma"]).pdf(math.log(x)) / x
        if self.family == "exponential":
            return p["rate"] * math.exp(-p["rate"] * x) if x >= 0 else 0.0
        if self.family == "uniform":
            return 1.0 / (p["high"] - p["low"]) if p["low"] <= x <= p["high"] else 0.0
        raise ValueError("bernoulli superpopulation has no density")

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


def true_quantile(spec: SuperpopulationSpec, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    return spec.quantile(p)


@dataclass(frozen=True)
class ProbabilityModel:
    """``constant(value)`` or ``logistic(a, b)`` giving ``1 / (1 + exp(-(a + b x)))``."""

    kind: str = "constant"
    params: dict = field(default_factory=lambda: {"value": 0.5})

    def __post_init__(self):
        if self.kind == "constant":
            if set(self.params) != {"value"} or not 0 <= self.params["value"] <= 1:
                raise ValueError("constant model takes a single 'value' in [0, 1]")
        elif self.kind == "logistic":
            if set(self.params) != {"a", "b"}:
                raise ValueError("logistic model takes parameters 'a' and 'b'")
        else:
            raise ValueError(f"unknown probability model {self.kind!r}")
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})

    @classmethod
    def constant(cls, value):
        return cls("constant", {"value": value})

    @classmethod
    def logistic(cls, a, b):
        return cls("logistic", {"a": a, "b": b})

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "constant":
            return np.full_like(x, self.params["value"])
        t = self.params["a"] + self.params["b"] * x
        return 0.5 * (1.0 + np.tanh(0.5 * t))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class DesignSpec:
    """Joint law of inclusion probability and big-data membership given X.

    ``pi = clip(pi_model(X), pi_min, 1)`` and ``P(delta = 1 | X) =
    delta_model(X)``. With ``linkage_uncertainty > 0`` each big-data unit is
    independently removed from the big data with that probability before the
    survey is drawn, as when its survey membership cannot be confirmed.
    """

    pi_model: ProbabilityModel = field(default_factory=lambda: ProbabilityModel.constant(0.5))
    delta_model: ProbabilityModel = field(default_factory=lambda: ProbabilityModel.constant(0.5))
    pi_min: float = 0.01
    linkage_uncertainty: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.pi_min <= 1.0:
            raise ValueError("pi_min must lie in (0, 1]")
        if not 0.0 <= self.linkage_uncertainty <= 1.0:
            raise ValueError("linkage_uncertainty must lie in [0, 1]")

    def inclusion(self, x):
        return np.clip(self.pi_model(x), self.pi_min, 1.0)

    def big_data_probability(self, x):
        return self.delta_model(x) * (1.0 - self.linkage_uncertainty)

    def to_dict(self) -> dict:
        return {
            "pi_model": self.pi_model.to_dict(),
            "delta_model": self.delta_model.to_dict(),
            "pi_min": self.pi_min,
            "linkage_uncertainty": self.linkage_uncertainty,
        }


@dataclass(frozen=True)
class SimConfig:
    superpopulation: SuperpopulationSpec = field(default_factory=SuperpopulationSpec)
    design: DesignSpec = field(default_factory=DesignSpec)
    n: int = 10_000
    replications: int = 1000
    p: float = 0.5
    gamma: float = 0.5
    seed: int = 0
    confidence_level: float = 0.95

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a nonnegative 64-bit integer")
        if not 0.0 < self.confidence_level < 1.0:
            raise ValueError("confidence_level must lie in (0, 1)")
        QuantileSpec(self.p, self.gamma)

    @property
    def spec(self) -> QuantileSpec:
        return QuantileSpec(self.p, self.gamma)

    def to_dict(self) -> dict:
        return {
            "superpopulation": self.superpopulation.to_dict(),
            "design": self.design.to_dict(),
            "n": self.n,
            "replications": self.replications,
            "p": self.p,
            "gamma": self.gamma,
            "seed": self.seed,
            "confidence_level": self.confidence_level,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        """Build a config from a mapping; absent fields take the defaults."""
        doc = dict(doc)
        doc.pop("format", None)
        unknown = set(doc) - {f for f in cls.__dataclass_fields__} - {"n_grid", "workers"}
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        if "superpopulation" in doc:
            sp = doc["superpopulation"]
            kwargs["superpopulation"] = SuperpopulationSpec(sp["family"], sp.get("params", {}))
        if "design" in doc:
            d = dict(doc["design"])
            for key in ("pi_model", "delta_model"):
                if key in d:
                    d[key] = ProbabilityModel(d[key]["kind"], d[key].get("params", {}))
            kwargs["design"] = DesignSpec(**d)
        for key in ("n", "replications", "seed"):
            if key in doc:
                kwargs[key] = int(doc[key])
        for key in ("p", "gamma", "confidence_level"):
            if key in doc:
                kwargs[key] = float(doc[key])
        return cls(**kwargs)


def _expect_below_above(config: SimConfig, g) -> tuple:
    """``E[g(X) I(X <= q)]`` and ``E[g(X) I(X > q)]`` by quadrature in probability scale."""
    sp, p = config.superpopulation, config.p

    def integrand(u):
        return float(g(sp.quantile(u)))

    def quad(lo, hi):
        # The pi_min clip puts a kink in the integrand that quad reports as
        # roundoff; only its error estimate matters here.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            value, err = integrate.quad(integrand, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-11)
        if err > 1e-6 * max(1.0, abs(value)):
            warnings.warn(f"design moment quadrature error {err:.2g}", RuntimeWarning, stacklevel=3)
        return value

    return quad(0.0, p), quad(p, 1.0)


def design_variances(config: SimConfig) -> AsymptoticVariance:
    """Exact asymptotic variances implied by a superpopulation and design."""
    sp, design, p = config.superpopulation, config.design, config.p
    theta0 = true_quantile(sp, p)
    f0 = sp.density(theta0)
    if design.pi_model.kind == "constant" and design.delta_model.kind == "constant":
        excess = 1.0 / float(design.inclusion(0.0)) - 1.0
        q = float(design.big_data_probability(0.0))
        m_le_A, m_gt_A = excess * p, excess * (1.0 - p)
        m_le_DI, m_gt_DI = q * m_le_A, q * m_gt_A
    else:
        m_le_A, m_gt_A = _expect_below_above(config, lambda x: 1.0 / design.inclusion(x) - 1.0)
        m_le_DI, m_gt_DI = _expect_below_above(
            config,
            lambda x: design.big_data_probability(x) * (1.0 / design.inclusion(x) - 1.0),
        )
    return theoretical_variances(VarianceInputs(p, f0, m_le_A, m_gt_A, m_le_DI, m_gt_DI))


def _rng(config: SimConfig, index: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, config.n, index, attempt])


def generate_frame(config: SimConfig, replication_index: int, attempt: int = 0) -> PopulationFrame:
    """Draw one complete population with its survey and big-data memberships."""
    rng = _rng(config, replication_index, attempt)
    n = config.n
    x = config.superpopulation.sample(rng, n)
    pi = config.design.inclusion(x)
    delta = (rng.random(n) < config.design.big_data_probability(x)).astype(np.int8)
    alpha = (rng.random(n) < pi).astype(np.int8)
    return PopulationFrame(x, pi, alpha, delta, n=n)


@dataclass(frozen=True)
class ReplicationOutcome:
    index: int
    estimates: dict
    ci_hits: dict
    resamples: int = 0


def _usable_frame(config: SimConfig, index: int):
    for attempt in range(MAX_ATTEMPTS):
        frame = generate_frame(config, index, attempt)
        # An empty survey leaves the survey weights (and possibly all) at zero.
        if np.any(frame.alpha == 1):
            return frame, attempt
    raise DegenerateSampleError(
        f"replication {index}: no survey units after {MAX_ATTEMPTS} attempts"
    )


def run_replication(
    config: SimConfig, index: int, with_ci: bool = True, theta0: Optional[float] = None
) -> ReplicationOutcome:
    """Estimate with all three estimators on one generated population.

    A population whose survey is empty is redrawn from a fresh stream; the
    number of redraws is reported. Confidence intervals use plug-in
    variances with the density estimated from each estimator's own weights.
    """
    frame, resamples = _usable_frame(config, index)
    spec = config.spec
    estimates = {k.value: estimate(frame, k, spec).value for k in KINDS}
    hits = {}
    if with_ci:
        if theta0 is None:
            theta0 = true_quantile(config.superpopulation, config.p)
        for k in KINDS:
            est = estimates[k.value]
            try:
                var = plug_in_variances(frame, est, config.p, density_from=k).for_kind(k)
            except VarianceUnavailable:
                var = None
            if var is None:
                hits[k.value] = None
                continue
            lo, hi = confidence_interval(est, var, config.n, config.confidence_level)
            hits[k.value] = bool(lo <= theta0 <= hi)
    return ReplicationOutcome(index, estimates, hits, resamples)


def _map(fn, items, workers: Optional[int]):
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class KindSummary:
    mean_estimate: float
    mean_scaled_error: float
    var_scaled_error: Optional[float]
    skewness: Optional[float]
    excess_kurtosis: Optional[float]
    coverage: Optional[float]
    theoretical_variance: Optional[float]


@dataclass
class SimResult:
    config: SimConfig
    theta0: float
    replications: int
    seed: int
    resamples: int
    theoretical: Optional[AsymptoticVariance]
    summaries: dict
    estimates: np.ndarray = field(repr=False)

    def scaled_errors(self, kind) -> np.ndarray:
        col = KINDS.index(EstimatorKind(kind))
        return math.sqrt(self.config.n) * (self.estimates[:, col] - self.theta0)

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0,
            "replications": self.replications,
            "seed": self.seed,
            "resamples": self.resamples,
            "theoretical": None
            if self.theoretical is None
            else {
                "V": self.theoretical.V,
                "V_A": self.theoretical.V_A,
                "V_DI": self.theoretical.V_DI,
                "delta_A": self.theoretical.delta_A,
                "delta_DI": self.theoretical.delta_DI,
                "density": self.theoretical.density,
            },
            "estimators": {k: asdict(v) for k, v in self.summaries.items()},
            "variance_ordering_DI_le_A": self.variance_ordering(),
        }

    def variance_ordering(self) -> Optional[bool]:
        a = self.summaries["survey"].var_scaled_error
        di = self.summaries["integrated"].var_scaled_error
        if a is None or di is None:
            return None
        return bool(di <= a)


def _summarise(errors: np.ndarray, estimates: np.ndarray, hits, theory) -> KindSummary:
    r = errors.size
    mean = float(np.mean(errors))
    if r > 1:
        centred = errors - mean
        m2 = float(np.mean(centred**2))
        var = float(np.var(errors, ddof=1))
        if m2 > 0:
            skew = float(np.mean(centred**3)) / m2**1.5
            kurt = float(np.mean(centred**4)) / m2**2 - 3.0
        else:
            skew = kurt = None
    else:
        var = skew = kurt = None
    valid = [h for h in hits if h is not None]
    coverage = float(np.mean(valid)) if valid else None
    return KindSummary(float(np.mean(estimates)), mean, var, skew, kurt, coverage, theory)


def run_monte_carlo(config: SimConfig, workers: Optional[int] = None, with_ci: bool = True) -> SimResult:
    """Run every replication and summarise each estimator.

    Results are collected by replication index before aggregation, so they
    are bit-identical for any worker count.
    """
    theta0 = true_quantile(config.superpopulation, config.p)
    outcomes = _map(
        lambda i: run_replication(config, i, with_ci=with_ci, theta0=theta0),
        range(config.replications),
        workers,
    )
    outcomes.sort(key=lambda o: o.index)
    estimates = np.array([[o.estimates[k.value] for k in KINDS] for o in outcomes])
    try:
        theory = design_variances(config)
    except (ValueError, NonUniqueQuantileError):
        theory = None
    root_n = math.sqrt(config.n)
    summaries = {}
    for col, k in enumerate(KINDS):
        errors = root_n * (estimates[:, col] - theta0)
        hits = [o.ci_hits.get(k.value) for o in outcomes]
        summaries[k.value] = _summarise(
            errors, estimates[:, col], hits, None if theory is None else theory.for_kind(k)
        )
    return SimResult(
        config=config,
        theta0=theta0,
        replications=config.replications,
        seed=config.seed,
        resamples=sum(o.resamples for o in outcomes),
        theoretical=theory,
        summaries=summaries,
        estimates=estimates,
    )


def consistency_sweep(
    config: SimConfig, n_grid: Sequence[int], workers: Optional[int] = None
) -> list:
    """Median absolute errors to the truth and to the population estimate, per n."""
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    rows = []
    for n in n_grid:
        res = run_monte_carlo(replace(config, n=n), workers=workers, with_ci=False)
        est = res.estimates
        pop = est[:, 0]
        row = {"n": n}
        for col, k in enumerate(KINDS):
            row[f"median_abs_error_{k.value}"] = float(np.median(np.abs(est[:, col] - res.theta0)))
        row["median_abs_diff_survey"] = float(np.median(np.abs(est[:, 1] - pop)))
        row["median_abs_diff_integrated"] = float(np.median(np.abs(est[:, 2] - pop)))
        rows.append(row)
    return rows


def suboptimality_sweep(
    config: SimConfig,
    n_grid: Sequence[int],
    kind: EstimatorKind = EstimatorKind.INTEGRATED,
    workers: Optional[int] = None,
) -> list:
    """Median over replications of ``n (sup M_n - M_n(estimate))`` per n."""
    rows = []
    for n in n_grid:
        cfg = replace(config, n=int(n))

        def gap(i, cfg=cfg):
            frame, _ = _usable_frame(cfg, i)
            # n * M_n is a plain sum, so zero-weight units can be dropped.
            return suboptimality_gap(build_weighted_sample(frame, kind), cfg.spec)

        gaps = np.array(_map(gap, range(cfg.replications), workers))
        rows.append({"n": cfg.n, "median_gap": float(np.median(gaps)), "max_gap": float(gaps.max())})
    return rows
