"""
Command-line surface: run, solve, validate, sweep and tune scenario files.

Exit codes: 0 success, 1 scenario or validation failure, 2 runtime error.
"""
import argparse
import logging
import statistics
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli_w

from app.core import config
from app.core.errors import ClusterGameError, ScenarioError, UsageError
from app.schemas.run import EquilibriumReport, RunRecord, RunSummary, TuneCell, TuneSummary
from app.services import run_store
from app.services.gradient_play import GradientPlayEngine, Schedule, schedule_diagnostics, validate_schedule
from app.services.plotting import emit_convergence_plot
from app.services.reference_solver import equilibrium_report
from app.services.scenario_io import Scenario, canonical_dict, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

ALPHA_GRID_FACTORS = (1 / 3, 1.0, 10 / 3, 10.0)
SIGMA_GRID_FACTORS = (0.25, 0.5, 1.0)


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def resolve_scenario_path(name: str) -> Path:
    """A path as given, or a bundled scenario by name ('cournot', 'quadratic.toml')."""
    path = Path(name)
    if path.exists():
        return path.resolve()
    bundled = config.BUNDLED_SCENARIOS.get(path.stem)
    if bundled is not None and path.parent == Path("."):
        return bundled
    return path


def parse_seed_range(text: str) -> list[int]:
    """'a..b' (inclusive) or a comma-separated list."""
    text = text.strip()
    if ".." in text:
        start, _, stop = text.partition("..")
        try:
            lo, hi = int(start), int(stop)
        except ValueError:
            raise UsageError(f"invalid seed range '{text}'") from None
        if hi < lo:
            raise UsageError(f"empty seed range '{text}'")
        return list(range(lo, hi + 1))
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"invalid seed list '{text}'") from None
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def reference_for(scenario: Scenario, out: Path) -> EquilibriumReport:
    """Reference equilibrium of the scenario, computed once and cached under `out`."""
    store = run_store.EquilibriumStore.in_directory(out)
    cached = store.get(scenario.content_hash)
    if cached is not None:
        logger.info("[cli] using cached equilibrium for %s", scenario.content_hash[:12])
        return cached
    report = equilibrium_report(scenario.spec, scenario.content_hash)
    store.put(report)
    return report


def simulate_seed(scenario: Scenario, seed: int, reference: np.ndarray | None) -> RunRecord:
    run = scenario.config.run
    engine = GradientPlayEngine(scenario.spec, scenario.mixing, scenario.schedule, scenario.policy(seed), seed=seed)
    initial = engine.initial_state(run.initial, run.initial_explicit)
    return engine.run(run.iterations, run.record_every, initial, reference, scenario.content_hash)


def write_run_outputs(scenario: Scenario, record: RunRecord, directory: Path, reference: np.ndarray | None) -> RunSummary:
    summary = run_store.build_run_summary(record, scenario.schedule)
    run_store.write_trajectory_csv(record, directory / run_store.TRAJECTORY_FILE, scenario.spec.sizes)
    run_store.write_run_summary(summary, directory)
    emit_convergence_plot([record], directory / run_store.PLOT_FILE, scenario.spec.sizes, reference)
    return summary


def _sweep_worker(scenario_path: str, seed: int, out: str, reference: list[float] | None) -> RunRecord:
    scenario = load_scenario(scenario_path)
    ref = None if reference is None else np.asarray(reference)
    record = simulate_seed(scenario, seed, ref)
    write_run_outputs(scenario, record, run_store.seed_directory(Path(out), seed), ref)
    return record


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(resolve_scenario_path(args.scenario))
    out = Path(args.out or config.OUTPUT_DIR)
    reference = np.asarray(reference_for(scenario, out).point)
    seeds = [args.seed] if args.seed is not None else scenario.config.run.seeds
    for seed in seeds:
        record = simulate_seed(scenario, seed, reference)
        directory = run_store.seed_directory(out, seed)
        summary = write_run_outputs(scenario, record, directory, reference)
        logger.info("[cli] seed %d: final error %.4g -> %s", seed, summary.final_error, directory)
        print(summary.model_dump_json(exclude={"wall_clock"}))
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    scenario = load_scenario(resolve_scenario_path(args.scenario))
    out = Path(args.out or config.OUTPUT_DIR)
    report = reference_for(scenario, out)
    run_store.write_json(report.model_dump(), out / "equilibrium.json")
    print(report.model_dump_json(indent=2))
    if not (report.converged and report.kkt_ok):
        logger.error("[cli] reference equilibrium failed its checks (residual %.3e)", report.residual)
        return EXIT_INVALID
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(resolve_scenario_path(args.scenario))
    if args.canonical:
        sys.stdout.write(tomli_w.dumps(canonical_dict(scenario.config)))
        return EXIT_OK
    diag = schedule_diagnostics(scenario.schedule, max(1, scenario.config.run.iterations))
    print(f"ok {scenario.content_hash}")
    print(
        f"game={scenario.spec.name} clusters={list(scenario.spec.sizes)} "
        f"sum_alpha={diag.sum_alpha:.4g} sum_alpha_sq_over_sigma_sq={diag.sum_alpha_sq_over_sigma_sq:.4g}"
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    path = resolve_scenario_path(args.scenario)
    try:
        seeds = parse_seed_range(args.seeds)
    except UsageError as exc:
        print(f"error: --seeds: {exc}", file=sys.stderr)
        return EXIT_INVALID
    scenario = load_scenario(path)
    out = Path(args.out or config.OUTPUT_DIR)
    reference = reference_for(scenario, out).point
    workers = max(1, min(args.workers or config.SWEEP_WORKERS, len(seeds)))
    logger.info("[cli] sweep over %d seeds with %d workers", len(seeds), workers)

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_worker, str(path), seed, str(out), reference) for seed in seeds]
        records = [f.result() for f in futures]

    summaries = [run_store.build_run_summary(r, scenario.schedule) for r in records]
    aggregate = run_store.aggregate_sweep(scenario.content_hash, summaries)
    run_store.write_json(aggregate.model_dump(), out / "sweep.json")
    emit_convergence_plot(records, out / run_store.PLOT_FILE, scenario.spec.sizes, np.asarray(reference))
    print(aggregate.model_dump_json(indent=2))
    return EXIT_OK


def parse_float_list(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"invalid number list '{text}'") from None
    if not values:
        raise UsageError("empty number list")
    return values


def _tune_worker(scenario_path: str, seed: int, schedule: Schedule, iterations: int, reference: list[float]) -> float:
    scenario = load_scenario(scenario_path)
    run = scenario.config.run
    engine = GradientPlayEngine(scenario.spec, scenario.mixing, schedule, scenario.policy(seed), seed=seed)
    initial = engine.initial_state(run.initial, run.initial_explicit)
    record = engine.run(iterations, max(1, iterations), initial, np.asarray(reference), scenario.content_hash)
    return record.err_to_ne[-1]


def cmd_tune(args: argparse.Namespace) -> int:
    """Median final error over seeds for every (alpha0, sigma0) pair; a and b stay as in the scenario."""
    path = resolve_scenario_path(args.scenario)
    try:
        seeds = parse_seed_range(args.seeds)
        alphas = parse_float_list(args.alpha0) if args.alpha0 else None
        sigmas = parse_float_list(args.sigma0) if args.sigma0 else None
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    scenario = load_scenario(path)
    base = scenario.schedule
    alphas = alphas or [base.alpha0 * f for f in ALPHA_GRID_FACTORS]
    sigmas = sigmas or [base.sigma0 * f for f in SIGMA_GRID_FACTORS]
    t_offset = args.t_offset if args.t_offset is not None else base.t_offset
    iterations = args.iterations if args.iterations is not None else scenario.config.run.iterations
    out = Path(args.out or config.OUTPUT_DIR)
    reference = reference_for(scenario, out).point

    cells: list[TuneCell] = []
    pending = []
    workers = max(1, args.workers or config.SWEEP_WORKERS)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for alpha0 in alphas:
            for sigma0 in sigmas:
                schedule = Schedule(alpha0=alpha0, sigma0=sigma0, a=base.a, b=base.b, t_offset=t_offset)
                report = validate_schedule(schedule, scenario.spec)
                cell = TuneCell(alpha0=alpha0, sigma0=sigma0, rejected=report.codes())
                cells.append(cell)
                if report.ok:
                    futures = [
                        pool.submit(_tune_worker, str(path), seed, schedule, iterations, reference) for seed in seeds
                    ]
                    pending.append((cell, futures))
        for cell, futures in pending:
            cell.final_errors = [f.result() for f in futures]
            cell.median_error = statistics.median(cell.final_errors)
            logger.info("[cli] alpha0=%g sigma0=%g: median final error %.4g", cell.alpha0, cell.sigma0, cell.median_error)

    scored = [c for c in cells if c.median_error is not None]
    summary = TuneSummary(
        scenario_hash=scenario.content_hash,
        seeds=seeds,
        iterations=iterations,
        t_offset=t_offset,
        cells=cells,
        best=min(scored, key=lambda c: c.median_error) if scored else None,
    )
    run_store.write_json(summary.model_dump(), out / "tune.json")
    print(summary.model_dump_json(indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cluster-nash", description="Zero-order Nash equilibrium seeking in cluster games")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Simulate and write CSV, summary JSON and SVG")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None, help="Run this seed instead of the scenario's seed list")
    p.add_argument("--out", default=None, help=f"Output directory (default {config.OUTPUT_DIR})")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("solve", help="Reference equilibrium with KKT and best-response checks")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("validate", help="Run every scenario validation without simulating")
    p.add_argument("scenario")
    p.add_argument("--canonical", action="store_true", help="Print the canonical TOML form")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("sweep", help="Run many seeds in parallel and aggregate final errors")
    p.add_argument("scenario")
    p.add_argument("--seeds", required=True, help="Inclusive range a..b or a comma-separated list")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None, help=f"Process count (default {config.SWEEP_WORKERS})")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("tune", help="Median final error over seeds for a grid of alpha0 and sigma0")
    p.add_argument("scenario")
    p.add_argument("--alpha0", default=None, help="Comma-separated step-size scales (default: around the scenario's)")
    p.add_argument("--sigma0", default=None, help="Comma-separated smoothing-radius scales (default: around the scenario's)")
    p.add_argument("--seeds", default="1..5", help="Inclusive range a..b or a comma-separated list")
    p.add_argument("--t-offset", type=int, default=None, help="Override the schedule's starting t")
    p.add_argument("--iterations", type=int, default=None, help="Override the scenario's run length")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_tune)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ClusterGameError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
