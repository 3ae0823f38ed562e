"""
Run enclosure-method experiments from YAML configs.

Every subcommand writes into one output directory; CSV files carry the
config hash on their first line and JSON sidecars embed it as a field.

Usage:
    wave-enclosure simulate --config configs/free_space_mplus.yaml --out runs/mplus
    wave-enclosure probe --config configs/free_space_mplus.yaml --tau-min 3 --tau-max 12
    wave-enclosure survey --config configs/survey.yaml --threads 8
    wave-enclosure verify optical
    wave-enclosure plot slope runs/mplus/tilde.csv --out runs/mplus/slope.svg
    wave-enclosure plot enclosure-slice runs/survey/probes.csv --x3 0 --extent -3 3 -3 3
    wave-enclosure path --x 0 0 -1 --y 1 0 1 --gamma-plus 1 --gamma-minus 4

Exit codes:
    0  success
    1  numerical failure (no convergence, empty fit window, failed checks)
    2  invalid input (config, overlap, malformed CSV, unknown suite)
    3  stability (CFL or causality padding)
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from wave_enclosure.core.config import get_settings
from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.schemas.experiment import ExperimentConfig
from wave_enclosure.schemas.results import SurveyReport
from wave_enclosure.services import forward, indicator, medium, optical, pipeline, plotting, stencil, storage, verify

logger = logging.getLogger("wave_enclosure")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="Experiment YAML file")
    parser.add_argument("--out", help="Output directory (default: the config's output.directory)")
    parser.add_argument("--tau-min", type=float, help="Override taus.min")
    parser.add_argument("--tau-max", type=float, help="Override taus.max")
    parser.add_argument("--tau-count", type=int, help="Override taus.count")
    parser.add_argument("--seed", type=int, help="Override the config seed (draws the fit noise)")
    parser.add_argument("--noise", type=float, help="Override fit.noise, the relative noise put on the series")
    parser.add_argument(
        "--variant", choices=["both", "standard", "tilde"], help="Indicator variants to emit (overrides config)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wave-enclosure",
        description="Time-domain enclosure method: simulate, probe, survey, verify, plot",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--threads", type=int, help="Cap numba worker threads (default: WAVE_ENCLOSURE_THREADS)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Forward simulation; writes traces.csv and traces.json")
    _add_config_flags(p)
    p.add_argument("--energy-every", type=int, default=0, help="Record the discrete energy every N steps")

    p = sub.add_parser("probe", help="Indicator series, slope fit and sign report for one probe")
    _add_config_flags(p)

    p = sub.add_parser("survey", help="Per-probe lengths and the enclosure boundary point cloud")
    _add_config_flags(p)

    p = sub.add_parser("verify", help="Run a property suite and print a pass/fail table")
    p.add_argument("suite", help=f"One of: {', '.join(verify.suite_names())}")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plot", help="Render an SVG from a CSV written by another subcommand")
    p.add_argument("kind", choices=["slope", "trace", "enclosure-slice"])
    p.add_argument("csv", help="Input CSV")
    p.add_argument("--out", help="Output SVG (default: input path with .svg)")
    p.add_argument("--x3", type=float, default=0.0, help="Slice height for enclosure-slice")
    p.add_argument(
        "--extent", type=float, nargs=4, metavar=("X1MIN", "X1MAX", "X2MIN", "X2MAX"), default=(-3.0, 3.0, -3.0, 3.0)
    )
    p.add_argument("--config", help="Config whose inclusion is outlined on enclosure slices")

    p = sub.add_parser("path", help="Snell point and optical distance for one pair of points")
    p.add_argument("--x", type=float, nargs=3, required=True, help="Point below the interface")
    p.add_argument("--y", type=float, nargs=3, required=True, help="Point above the interface")
    p.add_argument("--gamma-plus", type=float, required=True)
    p.add_argument("--gamma-minus", type=float, required=True)
    return parser


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Flags win over config values; the result is validated again."""
    data = config.model_dump()
    for flag, key in (("tau_min", "min"), ("tau_max", "max"), ("tau_count", "count")):
        value = getattr(args, flag, None)
        if value is not None:
            data["taus"][key] = value
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "noise", None) is not None:
        data["fit"]["noise"] = args.noise
    if getattr(args, "variant", None) is not None:
        data["variants"] = args.variant
        if args.variant != "both":
            data["fit"]["series"] = args.variant
    if getattr(args, "out", None):
        data["output"]["directory"] = args.out
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise EnclosureError(
            exit_code=ExitCode.INVALID_INPUT,
            code=ErrorCode.INVALID_CONFIG,
            message=f"overrides produce an invalid config: {'; '.join(errors)}",
            detail={"errors": errors},
        ) from exc


def _load(args: argparse.Namespace) -> tuple[ExperimentConfig, Path]:
    config = apply_overrides(storage.load_experiment(args.config), args)
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return config, out


def cmd_simulate(args: argparse.Namespace) -> int:
    config, out = _load(args)
    m = config.medium()
    problems = medium.validate(m, config.source.region)
    if problems:
        for problem in problems:
            print(f"violation: {problem}", file=sys.stderr)
        return ExitCode.INVALID_INPUT
    grid = pipeline.build_grid(config)
    trace = forward.simulate(m, config.source, grid, energy_every=args.energy_every)
    digest = config.digest()
    storage.write_traces(out / "traces.csv", trace, digest)
    storage.write_trace_metadata(out / "traces.json", trace, grid, digest)
    print(f"traces: {len(trace.times)} times x {len(trace.nodes)} nodes -> {out / 'traces.csv'}")
    return ExitCode.OK


def cmd_probe(args: argparse.Namespace) -> int:
    config, out = _load(args)
    bundle = pipeline.add_noise(pipeline.compute_series(config), config)
    if bundle.standard is not None:
        storage.write_series(out / "standard.csv", bundle.standard)
    if bundle.tilde is not None:
        storage.write_series(out / "tilde.csv", bundle.tilde)
    run = pipeline.analyse(bundle, config)
    storage.write_json(out / "probe.json", run)

    print(f"L_hat = {run.fit.L_hat:.10g} (p = {run.fit.p_hat:.4g}, window {run.fit.window[0]:g}..{run.fit.window[1]:g})")
    for label, report in (("standard", run.sign_standard), ("tilde", run.sign_tilde)):
        if report is not None:
            print(f"sign {label}: {'ok' if report.passed else 'FAIL'} {report.note}".rstrip())
    if run.equivalence is not None:
        print(f"equivalence: {'ok' if run.equivalence.passed else 'FAIL'} (Kendall {run.equivalence.kendall_tau:.3f})")
    return ExitCode.OK


def cmd_survey(args: argparse.Namespace) -> int:
    config, out = _load(args)
    outcome = pipeline.run_survey(config)
    storage.write_probes(out / "probes.csv", outcome.probes, config.background, outcome.config_hash)
    storage.write_points(out / "enclosure.csv", outcome.boundary, outcome.config_hash)
    for k, run in enumerate(outcome.runs):
        storage.write_json(out / f"probe_{k:03d}.json", run)
    report = SurveyReport(
        config_hash=outcome.config_hash,
        background=config.background,
        probes=outcome.probes,
        boundary_points=int(outcome.boundary.shape[0]),
        hausdorff_excess=outcome.hausdorff_excess,
    )
    storage.write_json(out / "survey.json", report)
    print(f"{len(outcome.probes)} probes, {report.boundary_points} boundary points -> {out / 'enclosure.csv'}")
    if outcome.hausdorff_excess is not None:
        print(f"excess over inclusion along probe directions: {outcome.hausdorff_excess:.6g}")
    return ExitCode.OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = verify.run_suite(args.suite, seed=args.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.suite:<10} {r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}".rstrip())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} passed")
    return ExitCode.NUMERICAL if failed else ExitCode.OK


def cmd_plot(args: argparse.Namespace) -> int:
    source = Path(args.csv)
    target = Path(args.out) if args.out else source.with_suffix(".svg")
    if args.kind == "slope":
        series = storage.read_series(source)
        try:
            fit = indicator.extract_length(series)
        except EnclosureError as exc:
            logger.warning("No fit drawn: %s", exc.message)
            fit = None
        plotting.plot_slope(series, fit, target)
    elif args.kind == "trace":
        times, values, _ = storage.read_traces(source)
        plotting.plot_traces(times, values, target)
    else:
        probes, background = storage.read_probes(source)
        region = None
        if args.config:
            config = storage.load_experiment(args.config)
            region = config.inclusion.region if config.inclusion is not None else None
        encl = indicator.enclosure(probes, background)
        plotting.plot_enclosure_slice(encl, args.x3, tuple(args.extent), target, region=region)
    print(target)
    return ExitCode.OK


def cmd_path(args: argparse.Namespace) -> int:
    path = optical.optical_path(args.x, args.y, args.gamma_plus, args.gamma_minus)
    print(path.model_dump_json(indent=2))
    return ExitCode.OK


COMMANDS = {
    "simulate": cmd_simulate,
    "probe": cmd_probe,
    "survey": cmd_survey,
    "verify": cmd_verify,
    "plot": cmd_plot,
    "path": cmd_path,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    threads = args.threads if args.threads is not None else settings.threads
    stencil.set_thread_cap(threads)

    try:
        return int(COMMANDS[args.command](args))
    except EnclosureError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        for violation in exc.detail.get("violations", []):
            print(f"violation: {violation}", file=sys.stderr)
        if "suggested_dt" in exc.detail:
            print(f"suggested dt: {exc.detail['suggested_dt']!r}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
