# cli.py - Command-line entry point: optimize, plan, adapt, simulate
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Mapping, Optional

from config.settings import settings
from database.models import init_db
from services.adaptation import calibrate_rest, index_timeline, warn_on_ladder_size
from services.errors import (
    DegenerateIntervalError,
    InputFormatError,
    NoDataError,
    OptimizationFailedError,
    TruncatedSessionError,
    UndefinedRateError,
)
from services.file_formats import (
    load_problem,
    load_session_config,
    problem_from_waypoints,
    read_ladder,
    read_rr_csv,
    session_input_files,
    write_cycles_csv,
    write_model,
    write_timeline_csv,
    write_trajectory_csv,
)
from services.harness import compare_conditions, run_session
from services.interpolation import solve_trajectory
from services.manifest import build_manifest, record_run, write_manifest
from services.optimizer import TrajectoryOptimizer
from services.schemas import HrvParams, SessionReport

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3


def _hrv_overrides(args: argparse.Namespace) -> Dict[str, float]:
    values = {
        "window": getattr(args, "window", None),
        "delta_rs": getattr(args, "delta_rs", None),
        "delta_sr": getattr(args, "delta_sr", None),
        "rr_rest": getattr(args, "rr_rest", None),
    }
    return {k: v for k, v in values.items() if v is not None}


def _finish(
    args: argparse.Namespace,
    command: str,
    inputs: Mapping[str, Path],
    outputs: Mapping[str, Path],
    seed: Optional[int],
    overrides: dict,
    started: float,
) -> int:
    out_dir = Path(args.out_dir)
    manifest = build_manifest(command, inputs, seed=seed, overrides=overrides, outputs=outputs)
    write_manifest(out_dir, manifest)
    if args.record:
        init_db()
        record_run(manifest, output_dir=out_dir, duration_s=time.perf_counter() - started)
    for name, path in outputs.items():
        logger.info("wrote %s: %s", name, path)
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    problem = load_problem(args.waypoints, args.limits)
    optimizer = TrajectoryOptimizer(
        population=args.population,
        generations=args.generations,
        ladder_size=args.ladder_size,
        seed=args.seed,
        workers=args.workers,
    )
    front, ladder = optimizer.optimize(problem)

    out_dir = Path(args.out_dir)
    outputs = {
        "front": write_model(out_dir / "front.json", front),
        "ladder": write_model(out_dir / "ladder.json", ladder),
    }
    logger.info("ladder of %d entries, t_f from %.4f s to %.4f s", ladder.size, ladder.entries[0].t_f, ladder.entries[-1].t_f)
    overrides = {
        "population": args.population,
        "generations": args.generations,
        "ladder_size": args.ladder_size,
    }
    inputs = {"waypoints": Path(args.waypoints), "limits": Path(args.limits)}
    return _finish(args, "optimize", inputs, outputs, args.seed, overrides, started)


def cmd_plan(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    problem = problem_from_waypoints(args.waypoints)
    ladder = read_ladder(args.ladder)
    if ladder.waypoints_hash and ladder.waypoints_hash != problem.waypoints_fingerprint():
        raise InputFormatError(str(args.ladder), "ladder was optimized for different waypoints")
    entry = ladder.entry(args.index)
    if len(entry.h) != problem.n_waypoints + 1:
        raise InputFormatError(f"{args.ladder}:entries.{args.index}.h", "interval count does not match the waypoints")

    samples = solve_trajectory(entry.h, problem).sample(args.rate)
    out_dir = Path(args.out_dir)
    outputs = {"trajectory": write_trajectory_csv(out_dir / f"trajectory_k{args.index}.csv", samples, problem.joint_names)}
    logger.info("entry %d: t_f=%.4f s, %d samples at %g Hz", args.index, entry.t_f, samples.n_rows, args.rate)
    inputs = {"waypoints": Path(args.waypoints), "ladder": Path(args.ladder)}
    overrides = {"index": args.index, "rate": args.rate}
    return _finish(args, "plan", inputs, outputs, None, overrides, started)


def cmd_adapt(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    stream = read_rr_csv(args.rr)
    if len(stream) == 0:
        raise InputFormatError(str(args.rr), "RR stream is empty")
    ladder = read_ladder(args.ladder)

    hrv = {}
    inputs = {"rr": Path(args.rr), "ladder": Path(args.ladder)}
    if args.baseline:
        hrv["rr_rest"], _ = calibrate_rest(read_rr_csv(args.baseline))
        inputs["baseline"] = Path(args.baseline)
    hrv.update(_hrv_overrides(args))
    params = HrvParams(**hrv)
    warn_on_ladder_size(params, ladder.size)

    rows = index_timeline(stream, params, ladder.size, pin_index=args.pin_index)
    out_dir = Path(args.out_dir)
    outputs = {"timeline": write_timeline_csv(out_dir / "timeline.csv", rows)}
    logger.info("%d windows, final index %d", len(rows), rows[-1].index)
    overrides = dict(_hrv_overrides(args), pin_index=args.pin_index)
    return _finish(args, "adapt", inputs, outputs, None, overrides, started)


def _write_report(out_dir: Path, report: SessionReport, suffix: str = "") -> Dict[str, Path]:
    return {
        f"report{suffix}": write_model(out_dir / f"report{suffix}.json", report),
        f"timeline{suffix}": write_timeline_csv(out_dir / f"timeline{suffix}.csv", report.index_timeline),
        f"cycles{suffix}": write_cycles_csv(out_dir / f"cycles{suffix}.csv", report.cycles),
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    config = load_session_config(args.config, _hrv_overrides(args))
    if args.pin_index is not None:
        config = config.model_copy(update={"pin_index": args.pin_index, "condition": f"pinned_{args.pin_index}"})
    out_dir = Path(args.out_dir)
    inputs = {str(i): path for i, path in enumerate(session_input_files(args.config))}
    overrides = dict(_hrv_overrides(args), pin_index=args.pin_index, conditions=args.conditions or None)

    outputs: Dict[str, Path] = {}
    try:
        if args.conditions:
            for name, report in compare_conditions(config).items():
                outputs.update(_write_report(out_dir, report, f"_{name}"))
                logger.info("%s: b=%d phi=%.4f/min", name, report.cycles_completed, report.production_rate)
        else:
            report = run_session(config)
            outputs.update(_write_report(out_dir, report))
    except TruncatedSessionError as e:
        if e.report is not None:
            _write_report(out_dir, e.report, "_partial")
        raise
    return _finish(args, "simulate", inputs, outputs, config.seed, overrides, started)


def _add_output_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--out-dir", default=settings.OUTPUT_DIR, help="Directory for outputs and manifest.json")
    parser.add_argument("--record", action="store_true", help="Store the run manifest in the run registry")


def _add_hrv_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--window", type=float, help=f"Window length in seconds (default {settings.WINDOW_S})")
    parser.add_argument("--delta-rs", type=float, help=f"Rest-to-stress threshold (default {settings.DELTA_RS})")
    parser.add_argument("--delta-sr", type=float, help=f"Stress-to-rest threshold (default {settings.DELTA_SR})")
    parser.add_argument("--rr-rest", type=float, help=f"Rest-level mean RR in seconds (default {settings.RR_REST_S})")
    parser.add_argument("--pin-index", type=int, help="Hold every path at this 1-based ladder index")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trajplan", description="HRV-adaptive time/jerk trajectory planning")
    ap.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = ap.add_subparsers(dest="cmd", required=True)

    op = sub.add_parser("optimize", help="Optimize a waypoint problem into a Pareto front and solution ladder")
    op.add_argument("waypoints", help="Waypoints CSV or JSON")
    op.add_argument("limits", help="Kinematic limits JSON")
    op.add_argument("--population", type=int, default=settings.POPULATION)
    op.add_argument("--generations", type=int, default=settings.GENERATIONS)
    op.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    op.add_argument("--ladder-size", type=int, default=settings.LADDER_SIZE)
    op.add_argument("--workers", type=int, default=settings.EVAL_WORKERS, help="Threads for objective evaluation")
    _add_output_flags(op)
    op.set_defaults(func=cmd_optimize)

    pl = sub.add_parser("plan", help="Sample one ladder entry as a joint trajectory")
    pl.add_argument("waypoints", help="Waypoints CSV or JSON")
    pl.add_argument("ladder", help="Ladder JSON from optimize")
    pl.add_argument("--index", type=int, required=True, help="1-based ladder index (1 = min-jerk)")
    pl.add_argument("--rate", type=float, default=settings.SAMPLE_RATE_HZ, help="Sampling rate in Hz")
    _add_output_flags(pl)
    pl.set_defaults(func=cmd_plan)

    ad = sub.add_parser("adapt", help="Replay a recorded RR stream through the decision maker")
    ad.add_argument("rr", help="RR CSV: timestamp_s, rr_s")
    ad.add_argument("ladder", help="Ladder JSON from optimize")
    ad.add_argument("--baseline", help="Rest recording used to calibrate the rest level")
    _add_hrv_flags(ad)
    _add_output_flags(ad)
    ad.set_defaults(func=cmd_adapt)

    si = sub.add_parser("simulate", help="Run a closed-loop session from a config file")
    si.add_argument("config", help="Session config JSON")
    si.add_argument("--conditions", action="store_true", help="Run min-time, min-jerk and adaptive variants")
    _add_hrv_flags(si)
    _add_output_flags(si)
    si.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OptimizationFailedError, DegenerateIntervalError) as e:
        logger.error("%s", e)
        return EXIT_INFEASIBLE
    except (InputFormatError, NoDataError, UndefinedRateError, TruncatedSessionError, ValueError, IndexError) as e:
        logger.error("%s", e)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
