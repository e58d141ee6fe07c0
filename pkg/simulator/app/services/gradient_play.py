"""
Distributed zero-order gradient play between clusters.

Every iteration t, each agent j of cluster i
  1. mixes its neighbours' estimates:  v = sum_l w_jl x^(l)(t)
  2. builds a query at radius sigma_t around its own estimate x^(j)(t) and submits it
  3. receives one cost value from the oracle
  4. forms d = (n_i / sigma_t) * value * z
  5. steps: x^(j)(t+1) = proj(v - alpha_t d)
All substeps read iteration-t states (synchronous, Jacobi-style rounds).
"""
import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from app.core.errors import ScheduleViolationError, UsageError, ValidationReport
from app.schemas.run import RunRecord
from app.services.comm_graph import MixingMatrix, mix
from app.services.game_model import GameSpec, project_cluster
from app.services.gradient_estimator import (
    GradientEstimate,
    build_query_point,
    estimate_gradient,
    sample_unit_sphere,
)
from app.services.oracle import CombinationMode, CombinationPolicy, QueryRound, answer_queries
from app.services.rng import INITIAL_STATE, SPHERE, SeededStreams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    """alpha_t = alpha0 / t^a and sigma_t = sigma0 / t^b, with t starting at t_offset."""

    alpha0: float
    sigma0: float
    a: float = 1.0
    b: float = 1.0 / 3.0
    t_offset: int = 1

    def alpha(self, t: float) -> float:
        return self.alpha0 / t**self.a

    def sigma(self, t: float) -> float:
        return self.sigma0 / t**self.b

    def index(self, iteration: int) -> int:
        """Schedule index t of the step that starts at the given iteration count."""
        return self.t_offset + iteration


def validate_schedule(s: Schedule, spec: GameSpec | None = None) -> ValidationReport:
    """Step/radius balance constraints, plus sigma below every safety radius from the first step on."""
    report = ValidationReport(subject="schedule")
    if not s.alpha0 > 0:
        report.add("alpha0", f"alpha0 must be positive (got {s.alpha0})")
    if not s.sigma0 > 0:
        report.add("sigma0", f"sigma0 must be positive (got {s.sigma0})")
    if not 0.5 < s.a <= 1.0:
        report.add("a-range", f"requires 1/2 < a <= 1 (got a = {s.a})")
    if not s.b >= 0:
        report.add("b-range", f"requires b >= 0 (got b = {s.b})")
    if not s.a + s.b > 1:
        report.add("a-plus-b", f"requires a + b > 1 (got {s.a + s.b:g})")
    if not 2 * s.a - 2 * s.b > 1:
        report.add("2a-minus-2b", f"requires 2a - 2b > 1 (got {2 * s.a - 2 * s.b:g})")
    if s.t_offset < 1:
        report.add("t-offset", f"t_offset must be a positive integer (got {s.t_offset})")
    elif spec is not None and s.sigma0 > 0:
        r_min = spec.min_safety_radius()
        # With b >= 0 sigma_t is nonincreasing, so the first step is the binding one
        sigma_first = s.sigma(s.t_offset) if s.b >= 0 else s.sigma0
        if not sigma_first < r_min:
            report.add(
                "sigma-radius",
                f"requires sigma_t < min_i r_i = {r_min:g} at t = {s.t_offset} (got sigma = {sigma_first:g})",
            )
    return report


@dataclass(frozen=True)
class ScheduleDiagnostics:
    horizon: int
    sum_alpha: float
    sum_alpha_sq: float
    sum_alpha_sigma: float
    sum_alpha_sq_over_sigma_sq: float


def schedule_diagnostics(s: Schedule, horizon: int) -> ScheduleDiagnostics:
    """Partial sums of the balance series over [t_offset, t_offset + horizon)."""
    t = np.arange(s.t_offset, s.t_offset + horizon, dtype=float)
    alpha = s.alpha0 / t**s.a
    sigma = s.sigma0 / t**s.b
    return ScheduleDiagnostics(
        horizon=horizon,
        sum_alpha=float(alpha.sum()),
        sum_alpha_sq=float((alpha**2).sum()),
        sum_alpha_sigma=float((alpha * sigma).sum()),
        sum_alpha_sq_over_sigma_sq=float((alpha**2 / sigma**2).sum()),
    )


@dataclass(frozen=True)
class AgentState:
    cluster: int
    agent: int
    estimate: np.ndarray

    @property
    def action(self) -> float:
        """The agent's own action: component `agent` of its estimate."""
        return float(self.estimate[self.agent])


@dataclass(frozen=True)
class StepTrace:
    mixed: tuple[np.ndarray, ...]
    queries: tuple[np.ndarray, ...]
    # estimates[i][j]: the GradientEstimate agent j of cluster i stepped along
    estimates: tuple[tuple[GradientEstimate, ...], ...]
    oracle_values: tuple[np.ndarray, ...]
    alpha: float
    sigma: float


@dataclass(frozen=True)
class EngineState:
    """Local estimates after `iteration` completed steps; states[i][j] is agent j's estimate of x_i."""

    iteration: int
    states: tuple[np.ndarray, ...]
    trace: StepTrace | None = field(default=None, compare=False)

    def agents(self) -> list[AgentState]:
        return [
            AgentState(cluster=i, agent=j, estimate=block[j].copy())
            for i, block in enumerate(self.states)
            for j in range(block.shape[0])
        ]

    def joint_action(self) -> np.ndarray:
        return np.concatenate([np.diag(block) for block in self.states])

    def running_average(self) -> np.ndarray:
        return np.concatenate([block.mean(axis=0) for block in self.states])


def consensus_error(states: np.ndarray | Sequence[Sequence[float]]) -> float:
    """max_j ||x^(j) - x_bar|| over the agents of one cluster."""
    arr = np.asarray(states, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise UsageError(f"expected a nonempty (agents, dim) array, got shape {arr.shape}")
    return float(np.max(np.linalg.norm(arr - arr.mean(axis=0), axis=1)))


class GradientPlayEngine:
    """One simulation: a game, per-cluster mixing matrices, a schedule, an oracle policy and a seed."""

    def __init__(
        self,
        spec: GameSpec,
        mixing: Sequence[MixingMatrix],
        schedule: Schedule,
        policy: CombinationPolicy | None = None,
        seed: int = 0,
    ):
        if len(mixing) != spec.cluster_count:
            raise UsageError(f"need one mixing matrix per cluster ({spec.cluster_count}), got {len(mixing)}")
        for i, W in enumerate(mixing):
            if W.size != spec.sizes[i]:
                raise UsageError(f"mixing matrix {i} is {W.size}x{W.size}, cluster has {spec.sizes[i]} agents")
        self.spec = spec
        self.mixing = tuple(mixing)
        self.schedule = schedule
        self.seed = int(seed)
        self.streams = SeededStreams(self.seed)
        policy = policy or CombinationPolicy()
        if policy.mode is CombinationMode.UNIFORM_RANDOM:
            policy = replace(policy, streams=self.streams)
        policy.validate(spec)
        self.policy = policy

    def initial_state(self, mode: str = "midpoint", explicit: Sequence[Sequence[float]] | None = None) -> EngineState:
        """Every agent starts from the same feasible cluster vector."""
        blocks = []
        for i, cluster in enumerate(self.spec.clusters):
            lower, upper = self.spec.cluster_bounds[i]
            if mode == "midpoint":
                start = 0.5 * (lower + upper)
            elif mode == "random":
                start = self.streams.stream(INITIAL_STATE, i).uniform(lower, upper)
            elif mode == "explicit":
                if explicit is None or len(explicit) != self.spec.cluster_count:
                    raise UsageError("explicit initial state needs one vector per cluster")
                start = np.asarray(explicit[i], dtype=float)
                if start.shape != (cluster.agent_count,) or np.any(start < lower) or np.any(start > upper):
                    raise UsageError(f"explicit initial state of cluster {i} is not a feasible vector")
            else:
                raise UsageError(f"unknown initial-state mode '{mode}'")
            blocks.append(np.tile(start, (cluster.agent_count, 1)))
        return EngineState(iteration=0, states=tuple(blocks))

    def step(self, state: EngineState, with_trace: bool = False) -> EngineState:
        t = self.schedule.index(state.iteration)
        alpha = self.schedule.alpha(t)
        sigma = self.schedule.sigma(t)
        spec = self.spec

        round_ = QueryRound(spec=spec, iteration=t)
        mixed, samples, queries = [], [], []
        for i, cluster in enumerate(spec.clusters):
            if not sigma < cluster.safety_radius:
                raise ScheduleViolationError(
                    f"sigma_t = {sigma:g} at t = {t} is not below the safety radius {cluster.safety_radius:g} of cluster {i}"
                )
            block = state.states[i]
            mixed.append(mix(self.mixing[i], block))
            zs = [
                sample_unit_sphere(cluster.agent_count, self.streams.stream(SPHERE, i, j))
                for j in range(cluster.agent_count)
            ]
            q = np.stack([build_query_point(block[j], z, sigma, cluster) for j, z in enumerate(zs)])
            round_.submit_cluster(i, q)
            samples.append(zs)
            queries.append(q)

        answer = answer_queries(spec, round_, self.policy)

        new_blocks, estimates = [], []
        for i, cluster in enumerate(spec.clusters):
            cluster_estimates = tuple(
                estimate_gradient(value, z, sigma, spec.sizes[i]) for value, z in zip(answer.values[i], samples[i])
            )
            d = np.stack([e.d for e in cluster_estimates])
            new_blocks.append(project_cluster(cluster, mixed[i] - alpha * d))
            estimates.append(cluster_estimates)

        trace = None
        if with_trace:
            trace = StepTrace(
                mixed=tuple(mixed),
                queries=tuple(queries),
                estimates=tuple(estimates),
                oracle_values=answer.values,
                alpha=alpha,
                sigma=sigma,
            )
        return EngineState(iteration=state.iteration + 1, states=tuple(new_blocks), trace=trace)

    def run(
        self,
        T: int,
        record_every: int = 100,
        initial: EngineState | None = None,
        reference: np.ndarray | None = None,
        scenario_hash: str = "",
    ) -> RunRecord:
        """T steps from `initial` (default: box midpoints), recording every `record_every` iterations and the end."""
        if T < 0:
            raise UsageError(f"iteration count must be nonnegative, got {T}")
        if record_every < 1:
            raise UsageError(f"record_every must be positive, got {record_every}")
        report = validate_schedule(self.schedule, self.spec)
        if not report.ok:
            raise ScheduleViolationError("; ".join(v.message for v in report.violations))

        state = initial or self.initial_state()
        record = RunRecord.empty(
            cluster_count=self.spec.cluster_count,
            seed=self.seed,
            scenario_hash=scenario_hash,
            policy=self.policy.mode.value,
        )
        weighted_consensus = np.zeros(self.spec.cluster_count)
        ref = None if reference is None else np.asarray(reference, dtype=float)

        def _record(s: EngineState) -> None:
            t = self.schedule.index(s.iteration)
            x = s.joint_action()
            record.append(
                iteration=s.iteration,
                alpha=self.schedule.alpha(t),
                sigma=self.schedule.sigma(t),
                joint_action=x,
                running_average=s.running_average(),
                consensus=[consensus_error(block) for block in s.states],
                err_to_ne=math.nan if ref is None else float(np.linalg.norm(x - ref)),
            )

        started = time.perf_counter()
        logger.info(
            "[engine] run start: T=%d seed=%d policy=%s record_every=%d", T, self.seed, self.policy.mode.value, record_every
        )
        _record(state)
        for _ in range(T):
            t = self.schedule.index(state.iteration)
            alpha = self.schedule.alpha(t)
            weighted_consensus += alpha * np.array([consensus_error(block) for block in state.states])
            state = self.step(state)
            if state.iteration % record_every == 0 or state.iteration == T:
                _record(state)
                logger.debug("[engine] t=%d recorded", state.iteration)
        record.weighted_consensus = weighted_consensus.tolist()
        record.wall_clock = time.perf_counter() - started
        record.final_states = [block.copy() for block in state.states]
        logger.info("[engine] run done: T=%d in %.2fs", T, record.wall_clock)
        return record


def run(
    spec: GameSpec,
    mixing: Sequence[MixingMatrix],
    schedule: Schedule,
    policy: CombinationPolicy | None,
    T: int,
    seed: int,
    record_every: int = 100,
    initial_mode: str = "midpoint",
    initial_explicit: Sequence[Sequence[float]] | None = None,
    reference: np.ndarray | None = None,
    scenario_hash: str = "",
) -> RunRecord:
    engine = GradientPlayEngine(spec, mixing, schedule, policy, seed)
    initial = engine.initial_state(initial_mode, initial_explicit)
    return engine.run(T, record_every, initial, reference, scenario_hash)
