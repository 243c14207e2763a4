"""
Command-line front end: `emf-sg metric | sweep | simulate | validate |
dump-realization | runs`.

Outputs are CSV files starting with `# emf-sg v<version> manifest=<hash>`.
Exit codes: 0 ok, 2 usage/config/domain error, 3 numerical
non-convergence (partial rows kept), 4 validation failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
import time
from typing import IO, Dict, Iterator, List, Optional, Sequence

import numpy as np
import scipy
from pydantic import ValidationError

from . import __version__, crud, scenarios
from .analytic import cdf_exposure, coverage_dl, coverage_ul, evaluate, mean_exposure
from .config import RunConfig, Settings, load_config
from .database import create_tables, get_session, make_engine, make_session_factory
from .errors import ConfigError, ConvergenceError, DomainError
from .geometry import build_realization, dump_realization
from .schemas import METRICS, MetricCurve, MetricSpec, RunManifest
from .simulate import simulate, write_samples
from .units import NetworkParams, convert_exposure, db_to_linear, dbm_to_watt, per_m2_to_per_km2

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_VALIDATION = 4

GRID_OPTIONS = ("--t-db", "--te-dbm", "--tc-db", "--tc-dl-db", "--decades")
DEFAULT_SINR_GRID = "-10:1:20"
VALIDATE_SINR_GRID = "-10:5:20"
VALIDATE_MIN_N = 1000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text: str) -> np.ndarray:
    """`start:step:stop` (stop included) or a single value."""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise DomainError(f"bad grid '{text}': expected start:step:stop or a number")
    if len(values) == 1:
        return np.array(values)
    if len(values) != 3:
        raise DomainError(f"bad grid '{text}': expected start:step:stop")
    start, step, stop = values
    if step <= 0 or stop < start:
        raise DomainError(f"empty grid '{text}'")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12)


def _single(text: Optional[str], option: str) -> float:
    if text is None:
        raise DomainError(f"{option} is required for this metric")
    grid = parse_grid(text)
    if len(grid) != 1:
        raise DomainError(f"{option} takes a single value")
    return float(grid[0])


def normalize_argv(argv: Sequence[str]) -> List[str]:
    """Glue negative grid values to their option (`--t-db -10:1:20` -> `--t-db=-10:1:20`)."""
    out: List[str] = []
    i = 0
    argv = list(argv)
    while i < len(argv):
        token = argv[i]
        if token in GRID_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and len(argv[i + 1]) > 1 and (argv[i + 1][1].isdigit() or argv[i + 1][1] == "."):
            out.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


def metric_spec_from_args(args: argparse.Namespace) -> MetricSpec:
    """Build a MetricSpec with linear thresholds from the dB/dBm options."""
    name = args.metric
    if name not in METRICS:
        raise DomainError(f"unknown metric '{name}'; valid: {', '.join(METRICS)}")
    fields: Dict[str, object] = {"metric": name, "cap_mass": args.cap_mass}
    if name.startswith("coverage-"):
        fields["thresholds"] = db_to_linear(parse_grid(args.t_db or DEFAULT_SINR_GRID)).tolist()
    elif name.startswith("cdf-exposure-"):
        if args.te_dbm is None:
            raise DomainError(f"metric '{name}' requires --te-dbm")
        fields["thresholds"] = dbm_to_watt(parse_grid(args.te_dbm)).tolist()
    elif name in ("joint-uec", "joint-emp-udc", "conditional-emp-udc"):
        fields["t_cov_ul"] = float(db_to_linear(_single(args.tc_db, "--tc-db")))
        fields["t_exp"] = float(dbm_to_watt(_single(args.te_dbm, "--te-dbm")))
        if name != "joint-uec":
            fields["t_cov_dl"] = float(db_to_linear(_single(args.tc_dl_db, "--tc-dl-db")))
    return MetricSpec(**fields)


def _exposure_link(metric: str) -> Optional[str]:
    if "exposure" in metric:
        return metric.rsplit("-", 1)[1]
    return None


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.9g}"


def build_manifest(command: str, config: RunConfig, params: NetworkParams, options: Dict,
                   seed: Optional[int] = None) -> RunManifest:
    return RunManifest(
        command=command,
        config_path=config.path,
        params=params.model_dump(),
        seed=seed,
        versions={"emf_sg": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        options=options,
    )


@contextlib.contextmanager
def open_output(path: Optional[str]) -> Iterator[IO[str]]:
    if path is None or path == "-":
        yield sys.stdout
        return
    with open(path, "w", newline="", encoding="utf-8") as handle:
        yield handle


def write_header(out: IO[str], manifest: RunManifest) -> None:
    out.write(f"# emf-sg v{__version__} manifest={manifest.digest()}\n")


def _finish(args: argparse.Namespace, settings: Settings, manifest: RunManifest, n_rows: int,
            started: float) -> None:
    """Manifest sidecar and registry entry, when requested."""
    manifest.wall_time_s = time.perf_counter() - started
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as handle:
            handle.write(manifest.model_dump_json(indent=2))
    url = args.registry or settings.registry_url
    if url:
        engine = make_engine(url)
        create_tables(engine)
        for db in get_session(make_session_factory(engine)):
            run = crud.get_or_create_run(db, manifest)
            crud.record_output(db, run, args.output or "-", n_rows)


def _threads(args: argparse.Namespace, settings: Settings) -> int:
    return args.threads if args.threads is not None else settings.threads


# ---------------------------------------------------------------------------
# Commands

def _curve_rows(curve: MetricCurve, params: NetworkParams, unit: str) -> List[List[str]]:
    link = _exposure_link(curve.metric)
    axis = np.asarray(curve.axis, dtype=float)
    values = np.asarray(curve.values, dtype=float)
    half = curve.half_width or [None] * len(values)
    if curve.kind == "value":
        # scalar metric on the BS density axis
        axis = per_m2_to_per_km2(axis)
        if link:
            converted = convert_exposure(values, unit, params, link)
            if curve.half_width is not None:
                factor = converted / (2.0 * values) if unit == "efield" else converted / values
                half = [h * f for h, f in zip(curve.half_width, np.where(values > 0, factor, 0.0))]
            values = converted
    elif link:
        axis = convert_exposure(axis, unit, params, link)
    return [[_fmt(a), _fmt(v), _fmt(h)] for a, v, h in zip(axis, values, half)]


def _analytic_curve(spec: MetricSpec, config: RunConfig, params: NetworkParams,
                    warnings: List[str]) -> MetricCurve:
    """Evaluate a metric; on non-convergence of a curve retry threshold by threshold."""
    try:
        return evaluate(spec, params, config.quadrature)
    except ConvergenceError as exc:
        if len(spec.thresholds) <= 1:
            raise
        logger.warning(f"{spec.metric}: {exc}; retrying per threshold")
    axis, values = [], []
    for t in spec.thresholds:
        try:
            single = evaluate(spec.model_copy(update={"thresholds": [t]}), params, config.quadrature)
        except ConvergenceError as exc:
            warnings.append(f"{spec.metric} at {t:.9g}: {exc}")
            continue
        axis.append(single.axis[0])
        values.append(single.values[0])
    kind = "ccdf" if spec.metric.startswith("coverage-") else "cdf"
    return MetricCurve.model_construct(metric=spec.metric, kind=kind, axis=axis, values=values,
                                       half_width=None, meta={})


def cmd_metric(args: argparse.Namespace, settings: Settings) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    params = config.params
    spec = metric_spec_from_args(args)
    n = args.n or config.mc.n
    seed = config.mc.seed if args.seed is None else args.seed
    options = {"metric": spec.model_dump(), "engine": args.engine, "exposure_unit": args.exposure_unit}
    if args.engine == "mc":
        options["n"] = n
    manifest = build_manifest("metric", config, params, options, seed if args.engine == "mc" else None)

    warnings: List[str] = []
    if args.engine == "mc":
        samples = simulate(params, n, seed, threads=_threads(args, settings), chunk_size=config.mc.chunk_size)
        estimate = samples.estimate(spec)
        axis = estimate.axis or [params.lambda_b]
        kind = "value" if estimate.kind in ("mean", "median", "joint-prob") else estimate.kind
        curve = MetricCurve.model_construct(metric=spec.metric, kind=kind, axis=axis,
                                            values=estimate.values, half_width=estimate.half_width_95, meta={})
    else:
        try:
            curve = _analytic_curve(spec, config, params, warnings)
        except ConvergenceError as exc:
            warnings.append(f"{spec.metric}: {exc}")
            curve = None
    if curve is not None and curve.kind == "prob":
        curve = curve.model_copy(update={"kind": "value"})
    if curve is not None and spec.metric.startswith(("joint-", "conditional-")):
        # probabilities are not exposure values
        rows = [[_fmt(per_m2_to_per_km2(a)), _fmt(v), _fmt(h)]
                for a, v, h in zip(curve.axis, curve.values, curve.half_width or [None] * len(curve.values))]
    else:
        rows = _curve_rows(curve, params, args.exposure_unit) if curve is not None else []

    with open_output(args.output) as out:
        write_header(out, manifest)
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["axis", "value", "half_width"])
        writer.writerows(rows)
        for message in warnings:
            writer.writerow(["#warning", message])
    _finish(args, settings, manifest, len(rows), started)
    return EXIT_NUMERICAL if warnings else EXIT_OK


def _decades(text: str) -> tuple:
    parts = text.split(":")
    try:
        k0, k1 = (int(round(float(p))) for p in parts)
    except ValueError:
        raise DomainError(f"bad --decades '{text}': expected K0:K1")
    return k0, k1


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    base = config.params
    rule = scenarios.rule_for(args.scenario)
    spec = metric_spec_from_args(args)
    if args.decades:
        k0, k1 = _decades(args.decades)
    else:
        k0, k1 = config.sweep.decades_a if rule.kind == "scenario-a" else config.sweep.decades_b
    densities = scenarios.density_grid((k0, k1), config.sweep.points_per_decade)
    n = args.n or config.mc.n
    seed = config.mc.seed if args.seed is None else args.seed
    options = {"metric": spec.model_dump(), "engine": args.engine, "scenario": rule.kind,
               "decades": [k0, k1], "points_per_decade": config.sweep.points_per_decade}
    manifest = build_manifest("sweep", config, base, options, seed if args.engine != "analytic" else None)

    warnings: List[str] = []
    result = None
    try:
        result = scenarios.sweep(rule, densities, spec, base, engine=args.engine, policy=config.quadrature,
                                 n=n, seed=seed, threads=_threads(args, settings))
    except ConvergenceError as exc:
        warnings.append(f"{spec.metric}: {exc}")

    header = ["axis", "value", "half_width", "branch", "clamped"]
    if args.engine == "both":
        header += ["mc_value", "discrepancy"]
    # cdf values are probabilities
    link = None if spec.metric.startswith("cdf-") else _exposure_link(spec.metric)

    def scale(value: Optional[float]) -> Optional[float]:
        if value is None or link is None:
            return value
        return float(convert_exposure(value, args.exposure_unit, base, link))

    def scale_spread(value: Optional[float], center: float) -> Optional[float]:
        if value is None or link is None or args.exposure_unit != "efield":
            return scale(value)
        # first-order propagation through the square root
        return value * scale(center) / (2.0 * center) if center > 0 else None

    rows = []
    if result is not None:
        for row in result.rows:
            line = [_fmt(per_m2_to_per_km2(row.density)), _fmt(scale(row.value)),
                    _fmt(scale_spread(row.half_width, row.value)), row.branch, int(row.clamped)]
            if args.engine == "both":
                line += [_fmt(scale(row.mc_value)),
                         _fmt(None if row.mc_value is None else abs(scale(row.value) - scale(row.mc_value)))]
            rows.append(line)

    with open_output(args.output) as out:
        write_header(out, manifest)
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        if result is not None:
            best = result.optimum
            writer.writerow(["#optimum", _fmt(per_m2_to_per_km2(best.density)), _fmt(scale(best.value)),
                             f"step_decades={result.step_decades:.9g}", best.branch])
        for message in warnings:
            writer.writerow(["#warning", message])
    _finish(args, settings, manifest, len(rows), started)
    return EXIT_NUMERICAL if warnings else EXIT_OK


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    params = config.params
    n = args.n or config.mc.n
    seed = config.mc.seed if args.seed is None else args.seed
    manifest = build_manifest("simulate", config, params, {"n": n}, seed)
    samples = simulate(params, n, seed, threads=_threads(args, settings), chunk_size=config.mc.chunk_size)
    with open_output(args.output) as out:
        write_header(out, manifest)
        n_rows = write_samples(samples, out)
    _finish(args, settings, manifest, n_rows, started)
    return EXIT_OK


def _validation_rows(samples, params: NetworkParams, config: RunConfig, tolerance: float,
                     mean_tolerance: float) -> List[List[str]]:
    rows = []
    density = per_m2_to_per_km2(params.lambda_b)
    for link in ("ul", "dl", "total"):
        metric = f"mean-exposure-{link}"
        expected = mean_exposure(link, params)
        mc = samples.mean(samples.exposure(link))
        rows.append(_compare_mean(metric, density, expected, mc.values[0], mc.half_width_95[0], mean_tolerance))
    quantiles = np.linspace(0.05, 0.95, 10)
    for link in ("ul", "dl", "total"):
        x = samples.exposure(link)
        t = np.unique(np.quantile(x, quantiles))
        t = t[t > 0]
        if t.size == 0:
            continue
        metric = f"cdf-exposure-{link}"
        analytic = cdf_exposure(link, t, params, config.quadrature).values
        mc = samples.estimate(MetricSpec(metric=metric, thresholds=t.tolist()))
        rows += _compare(metric, t, analytic, mc.values, mc.half_width_95, tolerance)
    t = db_to_linear(parse_grid(VALIDATE_SINR_GRID))
    for name, curve in (("coverage-ul", coverage_ul(t, params)), ("coverage-dl", coverage_dl(t, params))):
        mc = samples.estimate(MetricSpec(metric=name, thresholds=t.tolist()))
        rows += _compare(name, t, curve.values, mc.values, mc.half_width_95, tolerance)
    return rows


def _compare(metric, axis, analytic, mc, half_width, tolerance) -> List[List[str]]:
    rows = []
    for a, v, m, h in zip(axis, analytic, mc, half_width):
        gap = abs(v - m)
        rows.append([metric, _fmt(a), _fmt(v), _fmt(m), _fmt(h), _fmt(gap), "pass" if gap <= tolerance else "fail"])
    return rows


def _compare_mean(metric, axis, analytic, mc, half_width, tolerance) -> List[str]:
    """Relative gap; the MC band is added to the allowance."""
    gap = abs(analytic - mc) / analytic if analytic > 0 else abs(mc)
    allowed = tolerance + (half_width / analytic if analytic > 0 else half_width)
    return [metric, _fmt(axis), _fmt(analytic), _fmt(mc), _fmt(half_width), _fmt(gap),
            "pass" if gap <= allowed else "fail"]


def cmd_validate(args: argparse.Namespace, settings: Settings) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    params = config.params
    n = args.n or config.mc.n
    seed = config.mc.seed if args.seed is None else args.seed
    if n < VALIDATE_MIN_N:
        raise DomainError(f"validate needs n >= {VALIDATE_MIN_N}, got {n}")
    options = {"n": n, "tolerance": args.tolerance, "mean_tolerance": args.mean_tolerance}
    manifest = build_manifest("validate", config, params, options, seed)
    samples = simulate(params, n, seed, threads=_threads(args, settings), chunk_size=config.mc.chunk_size)
    warnings: List[str] = []
    try:
        rows = _validation_rows(samples, params, config, args.tolerance, args.mean_tolerance)
    except ConvergenceError as exc:
        rows = []
        warnings.append(str(exc))
    with open_output(args.output) as out:
        write_header(out, manifest)
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["metric", "axis", "analytic", "mc", "mc_half_width", "gap", "result"])
        writer.writerows(rows)
        for message in warnings:
            writer.writerow(["#warning", message])
    _finish(args, settings, manifest, len(rows), started)
    if warnings:
        return EXIT_NUMERICAL
    failed = sum(row[-1] == "fail" for row in rows)
    if failed:
        logger.error(f"{failed} of {len(rows)} comparisons outside tolerance {args.tolerance}")
        return EXIT_VALIDATION
    logger.info(f"All {len(rows)} comparisons within tolerance {args.tolerance}")
    return EXIT_OK


def cmd_dump_realization(args: argparse.Namespace, settings: Settings) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    params = config.params
    seed = config.mc.seed if args.seed is None else args.seed
    manifest = build_manifest("dump-realization", config, params, {}, seed)
    realization = build_realization(params, np.random.default_rng(np.random.SeedSequence(seed)))
    with open_output(args.output) as out:
        write_header(out, manifest)
        n_rows = dump_realization(realization, out)
    _finish(args, settings, manifest, n_rows, started)
    return EXIT_OK


def cmd_runs(args: argparse.Namespace, settings: Settings) -> int:
    url = args.registry or settings.registry_url
    if not url:
        raise DomainError("no registry configured (use --registry or EMF_SG_REGISTRY_URL)")
    engine = make_engine(url)
    create_tables(engine)
    with open_output(args.output) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["id", "created_at", "command", "manifest", "seed", "wall_time_s", "outputs"])
        for db in get_session(make_session_factory(engine)):
            for run in crud.list_runs(db, args.limit):
                writer.writerow([run.id, run.created_at, run.command, run.manifest_hash, run.seed,
                                 _fmt(run.wall_time_s), ";".join(o.path for o in run.outputs)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file (defaults built in)")
    parser.add_argument("--output", "-o", help="output CSV path (stdout if omitted)")
    parser.add_argument("--threads", type=int, help="worker threads, 0 = auto (env EMF_SG_THREADS)")
    parser.add_argument("--registry", help="SQLAlchemy URL of the run registry (env EMF_SG_REGISTRY_URL)")
    parser.add_argument("--manifest", help="write the run manifest as JSON to this path")
    parser.add_argument("--log-level", help="logging level (env EMF_SG_LOG_LEVEL)")


def _metric_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--metric", required=True, help=f"one of: {', '.join(METRICS)}")
    parser.add_argument("--t-db", help=f"SINR threshold grid in dB (default {DEFAULT_SINR_GRID})")
    parser.add_argument("--te-dbm", help="exposure threshold(s) in dBm")
    parser.add_argument("--tc-db", help="UL coverage threshold in dB (joint metrics)")
    parser.add_argument("--tc-dl-db", help="DL coverage threshold in dB (joint metrics)")
    parser.add_argument("--exposure-unit", choices=("w", "ipd", "efield"), default="w")
    parser.add_argument("--cap-mass", choices=("outer", "inner"), default="outer",
                        help="power-cap mass of the UL mean: beyond r_m (outer) or inside it (inner)")
    parser.add_argument("--n", type=int, help="Monte-Carlo realizations")
    parser.add_argument("--seed", type=int, help="Monte-Carlo seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emf-sg", description="EMF exposure and SINR coverage in Poisson-Voronoi networks")
    parser.add_argument("--version", action="version", version=f"emf-sg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("metric", help="evaluate one metric")
    _common(p)
    _metric_options(p)
    p.add_argument("--engine", choices=("analytic", "mc"), default="analytic")
    p.set_defaults(handler=cmd_metric)

    p = sub.add_parser("sweep", help="densification sweep with optimum")
    _common(p)
    _metric_options(p)
    p.add_argument("--scenario", choices=("a", "b"), required=True)
    p.add_argument("--engine", choices=("analytic", "mc", "both"), default="analytic")
    p.add_argument("--decades", help="density span K0:K1 in log10 per km^2 (default from config)")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("simulate", help="dump raw Monte-Carlo samples")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("validate", help="compare analytic curves with Monte-Carlo")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--mean-tolerance", type=float, default=0.05, help="relative tolerance of the mean rows")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("dump-realization", help="write one sampled network")
    _common(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_dump_realization)

    p = sub.add_parser("runs", help="list recorded runs")
    _common(p)
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(handler=cmd_runs)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = normalize_argv(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"emf-sg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)

    settings = Settings()
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args, settings)
    except ConfigError as exc:
        logger.error(f"config error: {exc}")
        return EXIT_USAGE
    except (DomainError, ValidationError) as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    except ConvergenceError as exc:
        logger.error(f"numerical failure: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
