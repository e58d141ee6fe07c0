"""
Run persistence: trajectory CSV, summary JSON and the reference-equilibrium cache.

CSV values are written with 17 significant digits so that float64 values read back
bit-exactly. Summary JSON excludes wall-clock time (kept in a separate timing file),
so reruns of the same scenario and seed produce byte-identical files.
"""
import csv
import json
import logging
import math
import sqlite3
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from app.core.errors import UsageError
from app.schemas.run import EquilibriumReport, RunRecord, RunSummary, ScheduleEcho, SweepSummary
from app.services.gradient_play import Schedule

logger = logging.getLogger(__name__)

TRAJECTORY_FILE = "trajectory.csv"
SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"
PLOT_FILE = "convergence.svg"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def trajectory_header(sizes: tuple[int, ...] | list[int]) -> list[str]:
    header = ["iteration", "alpha", "sigma", "err_to_ne"]
    header += [f"consensus_c{i + 1}" for i in range(len(sizes))]
    header += [f"x_{i + 1}_{j + 1}" for i, n in enumerate(sizes) for j in range(n)]
    header += [f"xbar_{i + 1}_{j + 1}" for i, n in enumerate(sizes) for j in range(n)]
    return header


def write_trajectory_csv(record: RunRecord, path: Path, sizes: tuple[int, ...] | list[int]) -> None:
    """One row per recorded iteration; `sizes` are the cluster sizes n_i."""
    if len(record) == 0:
        raise UsageError("cannot write an empty run record")
    if len(sizes) != record.cluster_count or sum(sizes) != record.final_action.shape[0]:
        raise UsageError(f"cluster sizes {tuple(sizes)} do not match the recorded joint action")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(trajectory_header(sizes))
        for k, iteration in enumerate(record.iterations):
            writer.writerow(
                [str(iteration), _fmt(record.alpha[k]), _fmt(record.sigma[k]), _fmt(record.err_to_ne[k])]
                + [_fmt(c) for c in record.consensus[k]]
                + [_fmt(v) for v in record.joint_actions[k]]
                + [_fmt(v) for v in record.running_averages[k]]
            )
    logger.debug("[store] wrote %d rows to %s", len(record), path)


def read_trajectory_csv(path: Path, seed: int = 0, scenario_hash: str = "", policy: str = "") -> RunRecord:
    """Rebuild the recorded part of a RunRecord from a trajectory CSV."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    consensus_cols = [k for k, name in enumerate(header) if name.startswith("consensus_c")]
    x_cols = [k for k, name in enumerate(header) if name.startswith("x_")]
    xbar_cols = [k for k, name in enumerate(header) if name.startswith("xbar_")]
    record = RunRecord.empty(len(consensus_cols), seed, scenario_hash, policy)
    for row in rows:
        record.append(
            iteration=int(row[0]),
            alpha=float(row[1]),
            sigma=float(row[2]),
            err_to_ne=float(row[3]),
            consensus=[float(row[k]) for k in consensus_cols],
            joint_action=np.array([float(row[k]) for k in x_cols]),
            running_average=np.array([float(row[k]) for k in xbar_cols]),
        )
    return record


def build_run_summary(record: RunRecord, schedule: Schedule) -> RunSummary:
    if len(record) == 0:
        raise UsageError("cannot summarize an empty run record")
    final_error = record.err_to_ne[-1]
    return RunSummary(
        seed=record.seed,
        scenario_hash=record.scenario_hash,
        iterations=record.iterations[-1],
        final_error=None if math.isnan(final_error) else final_error,
        final_consensus=record.consensus[-1],
        weighted_consensus=record.weighted_consensus,
        final_action=record.final_action.tolist(),
        policy=record.policy,
        schedule=ScheduleEcho(
            alpha0=schedule.alpha0,
            sigma0=schedule.sigma0,
            a=schedule.a,
            b=schedule.b,
            t_offset=schedule.t_offset,
        ),
        wall_clock=record.wall_clock,
    )


def write_run_summary(summary: RunSummary, directory: Path) -> Path:
    """Deterministic summary.json plus timing.json holding the wall-clock seconds."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / SUMMARY_FILE
    path.write_text(summary.model_dump_json(indent=2, exclude={"wall_clock"}) + "\n", encoding="utf-8")
    (directory / TIMING_FILE).write_text(json.dumps({"wall_clock": summary.wall_clock}) + "\n", encoding="utf-8")
    return path


def read_run_summary(directory: Path) -> RunSummary:
    directory = Path(directory)
    data = json.loads((directory / SUMMARY_FILE).read_text(encoding="utf-8"))
    timing = directory / TIMING_FILE
    data["wall_clock"] = json.loads(timing.read_text(encoding="utf-8"))["wall_clock"] if timing.exists() else 0.0
    return RunSummary.model_validate(data)


def aggregate_sweep(scenario_hash: str, summaries: list[RunSummary]) -> SweepSummary:
    if not summaries:
        raise UsageError("a sweep needs at least one run")
    ordered = sorted(summaries, key=lambda s: s.seed)
    errors = [s.final_error for s in ordered]
    if any(e is None for e in errors):
        raise UsageError("sweep runs need a reference equilibrium to report final errors")
    return SweepSummary(
        scenario_hash=scenario_hash,
        seeds=[s.seed for s in ordered],
        final_errors=errors,
        median_error=statistics.median(errors),
        min_error=min(errors),
        max_error=max(errors),
    )


def seed_directory(out: Path, seed: int) -> Path:
    return Path(out) / f"seed-{seed}"


@dataclass(frozen=True)
class EquilibriumStore:
    """SQLite cache of reference equilibria keyed by scenario content hash."""

    db_path: Path

    @classmethod
    def in_directory(cls, directory: Path) -> "EquilibriumStore":
