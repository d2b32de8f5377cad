"""Command-line entry point: ``estimate``, ``variance``, ``simulate`` and ``sweep``.

Exit codes: 0 success, 2 input error, 3 computation unavailable,
4 internal error. Errors are reported on stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from statistics import NormalDist
from typing import Optional, Sequence

from .asymptotics import VarianceUnavailable, confidence_interval, plug_in_variances
from .core import DegenerateSampleError, QuantileSpec
from .dataio import DatasetError, ResultDocument, load_config, make_metadata, parse_dataset
from .simulation import SimConfig, consistency_sweep, run_monte_carlo, suboptimality_sweep
from .weights import EstimatorKind, estimate

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_UNAVAILABLE, EXIT_INTERNAL = 0, 2, 3, 4


class Unavailable(RuntimeError):
    """A requested result cannot be computed from the inputs."""


@dataclass
class EstimateRequest:
    input: str
    n: Optional[int] = None
    kinds: tuple = tuple(k.value for k in EstimatorKind)
    p: float = 0.5
    gamma: float = 0.5
    level: float = 0.95
    output_format: str = "json"
    density_from: str = "own"

    def __post_init__(self):
        self.kinds = tuple(EstimatorKind(k).value for k in self.kinds)
        QuantileSpec(self.p, self.gamma)
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.output_format not in ("json", "csv"):
            raise ValueError("output format must be json or csv")


def _unavailable(reason) -> str:
    return f"unavailable: {reason}"


def _density_kind(request: EstimateRequest, kind: EstimatorKind) -> EstimatorKind:
    return kind if request.density_from == "own" else EstimatorKind(request.density_from)


def cmd_estimate(request: EstimateRequest) -> ResultDocument:
    """Point estimates, plug-in variances and intervals for each requested kind.

    Raises :class:`Unavailable` (after building the document) if any point
    estimate could not be formed; the partial document is attached.
    """
    frame = parse_dataset(request.input, request.n)
    spec = QuantileSpec(request.p, request.gamma)
    body = {"n": frame.n, "stored_units": len(frame), "p": request.p, "gamma": request.gamma,
            "level": request.level, "estimators": {}}
    failed = []
    for name in request.kinds:
        kind = EstimatorKind(name)
        entry = {}
        try:
            est = estimate(frame, kind, spec)
        except (DegenerateSampleError, ValueError) as exc:
            entry["estimate"] = _unavailable(exc)
            failed.append(name)
            body["estimators"][name] = entry
            continue
        entry["estimate"] = {
            "value": est.value, "lower_value": est.lower_value, "upper_value": est.upper_value,
            "l": est.indices.l, "u": est.indices.u, "L": est.indices.L,
            "total_weight": est.total_weight,
        }
        try:
            var = plug_in_variances(frame, est.value, request.p,
                                    density_from=_density_kind(request, kind))
            v = var.for_kind(kind)
            if v is None:
                raise VarianceUnavailable(var.unavailable.get("V_DI", "missing moments"))
            entry["variance"] = v
            entry["ci"] = list(confidence_interval(est.value, v, frame.n, request.level))
        except (VarianceUnavailable, ValueError) as exc:
            entry["variance"] = _unavailable(exc)
            entry["ci"] = _unavailable("variance unavailable")
        body["estimators"][name] = entry
    doc = ResultDocument("estimate", body, make_metadata(asdict(request)))
    if failed:
        err = Unavailable(f"no estimate for: {', '.join(failed)}")
        err.document = doc
        raise err
    return doc


def cmd_variance(request: EstimateRequest) -> ResultDocument:
    """Plug-in asymptotic variances around the integrated estimate."""
    frame = parse_dataset(request.input, request.n)
    spec = QuantileSpec(request.p, request.gamma)
    try:
        theta_hat = estimate(frame, EstimatorKind.INTEGRATED, spec).value
    except DegenerateSampleError as exc:
        raise Unavailable(str(exc)) from exc
    density_from = "integrated" if request.density_from == "own" else request.density_from
    try:
        var = plug_in_variances(frame, theta_hat, request.p, density_from=density_from)
    except VarianceUnavailable as exc:
        raise Unavailable(str(exc)) from exc
    body = {"n": frame.n, "p": request.p, "theta_hat": theta_hat, "density_from": density_from,
            "V": var.V, "V_A": var.V_A, "delta_A": var.delta_A,
            "V_DI": var.V_DI if var.V_DI is not None else _unavailable(var.unavailable["V_DI"]),
            "delta_DI": var.delta_DI if var.delta_DI is not None
            else _unavailable(var.unavailable["V_DI"]),
            "density": var.density, "bandwidth": var.bandwidth}
    return ResultDocument("variance", body, make_metadata(asdict(request)))


def _sim_config(args) -> SimConfig:
    doc = load_config(args.config) if args.config else {}
    config = SimConfig.from_dict(doc)
    overrides = {}
    for attr, key in (("n", "n"), ("reps", "replications"), ("seed", "seed"), ("p", "p"),
                      ("gamma", "gamma"), ("level", "confidence_level")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return replace(config, **overrides) if overrides else config


def cmd_simulate(config: SimConfig, dump_replications=None, workers=None) -> ResultDocument:
    """Run a Monte Carlo study; optionally dump draws and a normal overlay as CSV."""
    result = run_monte_carlo(config, workers=workers)
    if dump_replications:
        dump_replication_csv(result, dump_replications)
    return ResultDocument("simulate", result.to_dict(),
                          make_metadata(config.to_dict(), seed=config.seed))


def dump_replication_csv(result, path) -> None:
    """Write per-replication estimates and, beside them, normal overlay points."""
    path = Path(path)
    kinds = [k.value for k in EstimatorKind]
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["replication", "kind", "estimate", "scaled_error"])
        root_n = math.sqrt(result.config.n)
        for i, row in enumerate(result.estimates.tolist()):
            for kind, value in zip(kinds, row):
                out.writerow([i, kind, repr(value), repr(root_n * (value - result.theta0))])
    if result.theoretical is None:
        return
    overlay = path.with_name(path.stem + "_overlay.csv")
    with overlay.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["kind", "scaled_error", "density"])
        for kind in EstimatorKind:
            sd = math.sqrt(result.theoretical.for_kind(kind))
            dist = NormalDist(0.0, sd)
            for i in range(201):
                z = -4 * sd + 8 * sd * i / 200
                out.writerow([kind.value, repr(z), repr(dist.pdf(z))])


def cmd_sweep(config: SimConfig, n_grid: Sequence[int], with_gap=False, workers=None) -> ResultDocument:
    body = {"consistency": consistency_sweep(config, n_grid, workers=workers)}
    if with_gap:
        body["suboptimality"] = suboptimality_sweep(config, n_grid, workers=workers)
    meta = make_metadata({**config.to_dict(), "n_grid": list(n_grid)}, seed=config.seed)
    return ResultDocument("sweep", body, meta)


def _estimate_rows(doc: ResultDocument):
    yield ["kind", "estimate", "variance", "ci_lower", "ci_upper"]
    for kind, entry in doc.body["estimators"].items():
        est, var, ci = entry["estimate"], entry.get("variance", ""), entry.get("ci")
        yield [
            kind,
            repr(est["value"]) if isinstance(est, dict) else est,
            repr(var) if isinstance(var, float) else var,
            repr(ci[0]) if isinstance(ci, list) else "",
            repr(ci[1]) if isinstance(ci, list) else "",
        ]


def _emit(doc: ResultDocument, out: Optional[str], fmt: str = "json") -> None:
    if fmt == "csv" and doc.command == "estimate":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(_estimate_rows(doc))
        text = buf.getvalue()
    else:
        text = doc.to_json()
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _kinds(text: str):
    if text == "all":
        return tuple(k.value for k in EstimatorKind)
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="integrated-quantiles",
        description="Population, survey and integrated quantile estimation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--input", required=True, help="unit-level CSV (value,pi,alpha,delta)")
        p.add_argument("--n", type=int, help="population size (default: number of rows)")
        p.add_argument("--p", type=float, default=0.5)
        p.add_argument("--gamma", type=float, default=0.5)
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--out")
        p.add_argument("--density-from", default="own",
                       choices=["own"] + [k.value for k in EstimatorKind])

    est = sub.add_parser("estimate", help="point estimates with plug-in intervals")
    data_args(est)
    est.add_argument("--kinds", default="all", help="comma list of population,survey,integrated")
    est.add_argument("--format", default="json", choices=["json", "csv"])

    var = sub.add_parser("variance", help="plug-in asymptotic variances")
    data_args(var)

    def sim_args(p):
        p.add_argument("--config", help="JSON config; absent fields use defaults")
        p.add_argument("--n", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--p", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--level", type=float)
        p.add_argument("--workers", type=int, help="threads (default from $INTEGRATED_QUANTILES_THREADS)")
        p.add_argument("--out")

    sim = sub.add_parser("simulate", help="Monte Carlo study")
    sim_args(sim)
    sim.add_argument("--dump-replications", help="CSV of per-replication estimates")

    sweep = sub.add_parser("sweep", help="consistency sweep over population sizes")
    sim_args(sweep)
    sweep.add_argument("--n-grid", help="comma list of increasing n (or config 'n_grid')")
    sweep.add_argument("--with-gap", action="store_true", help="also report the check-loss gap")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    payload = {"error": {"code": code, "type": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, DatasetError) and exc.line is not None:
        payload["error"]["line"] = exc.line
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("estimate", "variance"):
            request = EstimateRequest(
                input=args.input, n=args.n, p=args.p, gamma=args.gamma, level=args.level,
                kinds=_kinds(getattr(args, "kinds", "all")),
                output_format=getattr(args, "format", "json"), density_from=args.density_from,
            )
            if args.command == "estimate":
                try:
                    doc = cmd_estimate(request)
                except Unavailable as exc:
                    if getattr(exc, "document", None) is not None:
                        _emit(exc.document, args.out, request.output_format)
                    return _fail(EXIT_UNAVAILABLE, exc)
                _emit(doc, args.out, request.output_format)
            else:
                _emit(cmd_variance(request), args.out)
        elif args.command == "simulate":
            _emit(cmd_simulate(_sim_config(args), args.dump_replications, args.workers), args.out)
        else:
            config = _sim_config(args)
            if args.n_grid:
                grid = [int(t) for t in args.n_grid.split(",")]
            else:
                doc = load_config(args.config) if args.config else {}
                grid = doc.get("n_grid")
                if not grid:
                    raise ValueError("sweep needs --n-grid or an 'n_grid' config field")
            _emit(cmd_sweep(config, grid, args.with_gap, args.workers), args.out)
    except Unavailable as exc:
        return _fail(EXIT_UNAVAILABLE, exc)
    except (DatasetError, FileNotFoundError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_INPUT, exc)
    except Exception as exc:  # pragma: no cover
        logger.exception("internal error")
        return _fail(EXIT_INTERNAL, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
