"""
Zero-order oracle shared by all clusters.

Each round every agent submits a feasible query point for its own cluster. The oracle
completes each agent's query with one representative query per other cluster and
answers with the agent's local cost there. Only scalar values leave this module.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from app.core.errors import FeasibilityError, NumericError, OracleProtocolError, UsageError
from app.services.game_model import GameSpec
from app.services.rng import REPRESENTATIVES, SeededStreams

logger = logging.getLogger(__name__)


class CombinationMode(str, Enum):
    UNIFORM_RANDOM = "uniform-random"
    FIXED_AGENT = "fixed-agent"
    ROUND_ROBIN = "round-robin"


@dataclass
class CombinationPolicy:
    """
    How the oracle picks the representative agent j_k of every other cluster k.

    uniform-random draws j_k independently per querying agent and round from that
    agent's own stream; fixed-agent always uses `fixed[k]`; round-robin uses t mod n_k.
    """

    mode: CombinationMode = CombinationMode.UNIFORM_RANDOM
    fixed: tuple[int, ...] = ()
    streams: SeededStreams | None = None

    def __post_init__(self) -> None:
        self.mode = CombinationMode(self.mode)
        if self.mode is CombinationMode.UNIFORM_RANDOM and self.streams is None:
            self.streams = SeededStreams(0)

    def validate(self, spec: GameSpec) -> None:
        if self.mode is not CombinationMode.FIXED_AGENT:
            return
        if len(self.fixed) != spec.cluster_count:
            raise UsageError(f"fixed-agent policy needs {spec.cluster_count} indices, got {len(self.fixed)}")
        for k, jk in enumerate(self.fixed):
            if not 0 <= jk < spec.sizes[k]:
                raise UsageError(f"fixed representative {jk} is not an agent of cluster {k}")

    def choose(self, spec: GameSpec, i: int, j: int, iteration: int) -> tuple[int, ...]:
        """Representative per cluster; entry i is the querying agent itself."""
        if self.mode is CombinationMode.FIXED_AGENT:
            reps = list(self.fixed)
        elif self.mode is CombinationMode.ROUND_ROBIN:
            reps = [iteration % n_k for n_k in spec.sizes]
        else:
            rng = self.streams.stream(REPRESENTATIVES, i, j)
            # One draw per cluster (own cluster included) keeps the per-round draw count fixed
            reps = [int(v) for v in rng.integers(0, spec.sizes)]
        reps[i] = j
        return tuple(reps)


@dataclass
class QueryRound:
    """Query points of one synchronous round, stored as one (n_i, n_i) block per cluster."""

    spec: GameSpec
    iteration: int
    points: list[np.ndarray] = field(init=False)
    _submitted: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.points = [np.zeros((n, n)) for n in self.spec.sizes]
        self._submitted = [np.zeros(n, dtype=bool) for n in self.spec.sizes]

    def submit(self, i: int, j: int, point: np.ndarray) -> None:
        self.points[i][j] = point
        self._submitted[i][j] = True

    def submit_cluster(self, i: int, points: np.ndarray) -> None:
        self.points[i][:] = points
        self._submitted[i][:] = True

    def is_complete(self) -> bool:
        return all(mask.all() for mask in self._submitted)

    def missing(self) -> list[tuple[int, int]]:
        return [(i, int(j)) for i, mask in enumerate(self._submitted) for j in np.flatnonzero(~mask)]


@dataclass(frozen=True)
class OracleAnswer:
    values: tuple[np.ndarray, ...]
    representatives: dict[tuple[int, int], tuple[int, ...]]

    def value(self, i: int, j: int) -> float:
        return float(self.values[i][j])


def assemble_joint_query(
    round_: QueryRound, i: int, j: int, policy: CombinationPolicy, reps: tuple[int, ...] | None = None
) -> np.ndarray:
    """Agent (i, j)'s own query joined with one representative query from every other cluster."""
    if not round_.is_complete():
        raise OracleProtocolError(f"query round {round_.iteration} is incomplete: missing {round_.missing()}")
    if reps is None:
        reps = policy.choose(round_.spec, i, j, round_.iteration)
    return np.concatenate([round_.points[k][reps[k]] for k in range(round_.spec.cluster_count)])


def _check_round_feasible(spec: GameSpec, round_: QueryRound) -> None:
    for i, (lower, upper) in enumerate(spec.cluster_bounds):
        bad = np.flatnonzero(np.any((round_.points[i] < lower) | (round_.points[i] > upper), axis=1))
        if bad.size:
            raise FeasibilityError(
                f"query of agent {int(bad[0])} in cluster {i} lies outside its box (round {round_.iteration})",
                cluster=i,
                agent=int(bad[0]),
            )


def answer_queries(spec: GameSpec, round_: QueryRound, policy: CombinationPolicy) -> OracleAnswer:
    """One local-cost value per agent, evaluated at its assembled joint query."""
    if not round_.is_complete():
        raise OracleProtocolError(f"query round {round_.iteration} is incomplete: missing {round_.missing()}")
    _check_round_feasible(spec, round_)
    # Draw every representative before any evaluation so answers do not depend on evaluation order
    representatives = {
        (i, j): policy.choose(spec, i, j, round_.iteration)
        for i in range(spec.cluster_count)
        for j in range(spec.sizes[i])
    }
    values = []
    for i in range(spec.cluster_count):
        cluster_values = np.empty(spec.sizes[i])
        for j in range(spec.sizes[i]):
            joint = assemble_joint_query(round_, i, j, policy, representatives[(i, j)])
            cluster_values[j] = spec.cost.local_cost(i, j, joint)
        if not np.all(np.isfinite(cluster_values)):
            raise NumericError(f"oracle produced a non-finite value in cluster {i}")
        values.append(cluster_values)
    return OracleAnswer(values=tuple(values), representatives=representatives)
