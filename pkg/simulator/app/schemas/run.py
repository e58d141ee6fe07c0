"""
Run artifacts: the recorded trajectory of one simulation and the JSON summaries built from it.
"""
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, Field


@dataclass
class RunRecord:
    """Time-indexed trajectory; one entry per recorded iteration, iterations strictly increasing."""

    cluster_count: int
    seed: int
    scenario_hash: str
    policy: str
    iterations: list[int] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)
    sigma: list[float] = field(default_factory=list)
    err_to_ne: list[float] = field(default_factory=list)
    consensus: list[list[float]] = field(default_factory=list)
    joint_actions: list[np.ndarray] = field(default_factory=list)
    running_averages: list[np.ndarray] = field(default_factory=list)
    # Per cluster: sum over steps of alpha_t * consensus error at t
    weighted_consensus: list[float] = field(default_factory=list)
    wall_clock: float = 0.0
    final_states: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def empty(cls, cluster_count: int, seed: int, scenario_hash: str, policy: str) -> "RunRecord":
        return cls(cluster_count=cluster_count, seed=seed, scenario_hash=scenario_hash, policy=policy)

    def append(
        self,
        *,
        iteration: int,
        alpha: float,
        sigma: float,
        joint_action: np.ndarray,
        running_average: np.ndarray,
        consensus: list[float],
        err_to_ne: float,
    ) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError(f"iteration {iteration} does not follow {self.iterations[-1]}")
        self.iterations.append(int(iteration))
        self.alpha.append(float(alpha))
        self.sigma.append(float(sigma))
        self.err_to_ne.append(float(err_to_ne))
        self.consensus.append([float(c) for c in consensus])
        self.joint_actions.append(np.asarray(joint_action, dtype=float).copy())
        self.running_averages.append(np.asarray(running_average, dtype=float).copy())

    def __len__(self) -> int:
        return len(self.iterations)

    @property
    def final_action(self) -> np.ndarray:
        return self.joint_actions[-1]

    def trajectory(self) -> np.ndarray:
        """(recorded iterations, dimension) array of joint actions."""
        return np.vstack(self.joint_actions)

    def consensus_array(self) -> np.ndarray:
        return np.asarray(self.consensus, dtype=float)


class ScheduleEcho(BaseModel):
    alpha0: float
    sigma0: float
    a: float
    b: float
    t_offset: int


class RunSummary(BaseModel):
    """Summary JSON of one run."""

    seed: int
    scenario_hash: str = Field(..., description="sha256 of the canonical scenario content")
    iterations: int
    final_error: float | None = Field(default=None, ge=0, description="||x(T) - x*||_2; null without reference")
    final_consensus: list[float] = Field(..., description="Per-cluster max_j ||x^(j) - x_bar|| at T")
    weighted_consensus: list[float] = Field(..., description="Per-cluster sum_t alpha_t * consensus error")
    final_action: list[float]
    policy: str
    schedule: ScheduleEcho
    wall_clock: float = Field(..., ge=0, description="Seconds; excluded from the deterministic summary file")


class SweepSummary(BaseModel):
    scenario_hash: str
    seeds: list[int]
    final_errors: list[float]
    median_error: float
    min_error: float
    max_error: float


class EquilibriumReport(BaseModel):
    """JSON emitted by `solve`."""

    scenario_hash: str
    point: list[float]
    clusters: list[list[float]]
    residual: float
    iterations: int
    converged: bool
    kkt_max_violation: float
    kkt_ok: bool
    best_response_gaps: list[float] | None = None


class TuneCell(BaseModel):
    alpha0: float
    sigma0: float
    final_errors: list[float] = Field(default_factory=list)
    median_error: float | None = Field(default=None, description="Null when the schedule was rejected")
    rejected: list[str] = Field(default_factory=list, description="Violated schedule constraint codes")


class TuneSummary(BaseModel):
    """JSON emitted by `tune`: median final error per (alpha0, sigma0) cell."""

    scenario_hash: str
    seeds: list[int]
    iterations: int
    t_offset: int
    cells: list[TuneCell]
    best: TuneCell | None = None
