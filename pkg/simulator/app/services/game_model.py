"""
n-cluster games: action boxes, local and cluster costs, the game mapping F and the
Euclidean projection onto cluster boxes.

Cost models evaluate on arrays whose last axis is the joint action, so the same code
answers a single oracle query or a batch of a million Monte-Carlo queries.
Cluster costs are always the 1/n_i average of the agents' local costs.
"""
import logging
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from pydantic import ValidationError

from app.core.errors import (
    ConstructionError,
    FeasibilityError,
    NumericError,
    UnsupportedOperationError,
    UsageError,
)
from app.schemas.game import ActionInterval, ClusterSpec, CournotParams

logger = logging.getLogger(__name__)

# Central finite-difference step used when a cost model has no analytic gradient
FD_STEP = 1e-5


class CostModel(ABC):
    """Local cost functions J_i^j of every agent, batched over leading axes."""

    name: str = "custom"

    @abstractmethod
    def local_cost(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        """J_i^j at joint action(s) x, shape (..., dim) -> (...)."""

    def local_gradient(self, i: int, j: int, x: np.ndarray) -> np.ndarray | None:
        """Analytic grad_{x_i} J_i^j, shape (..., n_i); None when not available."""
        return None

    def cluster_gradient(self, i: int, x: np.ndarray) -> np.ndarray | None:
        """Analytic grad_{x_i} J_i; None falls back to averaging local gradients."""
        return None


class CournotCost(CostModel):
    """
    Factory j of company i pays C(x) = a x^2 + b x + c and sells at P(x) = P_c - sum(x):
    J_i^j(x) = C_i^j(x_i^j) - x_i^j P(x).
    """

    name = "cournot"

    def __init__(self, params: CournotParams):
        self.params = params
        agents = [agent for cluster in params.clusters for agent in cluster]
        self._a = np.array([agent.a for agent in agents], dtype=float)
        self._b = np.array([agent.b for agent in agents], dtype=float)
        self._c = np.array([agent.c for agent in agents], dtype=float)
        sizes = [len(cluster) for cluster in params.clusters]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def price(self, x: np.ndarray) -> np.ndarray:
        return self.params.price_constant - np.sum(x, axis=-1)

    def local_cost(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        k = self._offsets[i] + j
        xk = x[..., k]
        return self._a[k] * xk**2 + self._b[k] * xk + self._c[k] - xk * self.price(x)

    def local_gradient(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        lo, hi = self._offsets[i], self._offsets[i + 1]
        k = lo + j
        xk = x[..., k]
        # d/dx_l of -x_k P(x) is x_k for every l in the cluster; the own component adds C'(x_k) - P(x)
        grad = np.repeat(xk[..., None], hi - lo, axis=-1)
        grad[..., j] += 2.0 * self._a[k] * xk + self._b[k] - self.price(x)
        return grad

    def cluster_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        lo, hi = self._offsets[i], self._offsets[i + 1]
        xi = x[..., lo:hi]
        own = 2.0 * self._a[lo:hi] * xi + self._b[lo:hi]
        shared = np.sum(xi, axis=-1) - self.price(x)
        return (own + shared[..., None]) / (hi - lo)


class SeparableQuadraticCost(CostModel):
    """J_i^j(x) = ||x_i - c_i||^2 / 2 + offset: no coupling, the NE is proj_box(c)."""

    name = "quadratic-separable"

    def __init__(self, targets: Sequence[Sequence[float]], offset: float = 0.0):
        self.targets = [np.asarray(t, dtype=float) for t in targets]
        self.offset = float(offset)
        sizes = [len(t) for t in self.targets]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def _own(self, i: int, x: np.ndarray) -> np.ndarray:
        return x[..., self._offsets[i] : self._offsets[i + 1]] - self.targets[i]

    def local_cost(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        diff = self._own(i, x)
        return 0.5 * np.sum(diff**2, axis=-1) + self.offset

    def local_gradient(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        return self._own(i, x)

    def cluster_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        return self._own(i, x)


class CallableCost(CostModel):
    """Wrap user-supplied closed forms; `cost(i, j, x)` must accept batched x."""

    def __init__(
        self,
        cost: Callable[[int, int, np.ndarray], np.ndarray],
        gradient: Callable[[int, int, np.ndarray], np.ndarray] | None = None,
        name: str = "custom",
    ):
        self._cost = cost
        self._gradient = gradient
        self.name = name

    def local_cost(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._cost(i, j, x), dtype=float)

    def local_gradient(self, i: int, j: int, x: np.ndarray) -> np.ndarray | None:
        if self._gradient is None:
            return None
        return np.asarray(self._gradient(i, j, x), dtype=float)


@dataclass(frozen=True)
class GameSpec:
    """Full description of an n-cluster game. Immutable; safe to share across runs."""

    clusters: tuple[ClusterSpec, ...]
    cost: CostModel
    allow_finite_differences: bool = True
    name: str = field(default="custom")

    def __post_init__(self) -> None:
        if not self.clusters:
            raise ConstructionError("a game needs at least one cluster")

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)

    @cached_property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.agent_count for c in self.clusters)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.sizes)]))

    @property
    def dimension(self) -> int:
        return self.offsets[-1]

    @cached_property
    def lower(self) -> np.ndarray:
        return np.concatenate([np.asarray(c.lower, dtype=float) for c in self.clusters])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.concatenate([np.asarray(c.upper, dtype=float) for c in self.clusters])

    @cached_property
    def cluster_bounds(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        return tuple(
            (np.asarray(c.lower, dtype=float), np.asarray(c.upper, dtype=float)) for c in self.clusters
        )

    def cluster_slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        """Joint action -> per-cluster vectors."""
        return [x[..., self.cluster_slice(i)] for i in range(self.cluster_count)]

    def join(self, parts: Sequence[np.ndarray]) -> np.ndarray:
        """Per-cluster vectors -> joint action."""
        return np.concatenate([np.asarray(p, dtype=float) for p in parts], axis=-1)

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def min_safety_radius(self) -> float:
        return min(c.safety_radius for c in self.clusters)


def _check_cluster(spec: GameSpec, i: int) -> None:
    if not 0 <= i < spec.cluster_count:
        raise UsageError(f"cluster index {i} out of range [0, {spec.cluster_count})")


def _check_agent(spec: GameSpec, i: int, j: int) -> None:
    _check_cluster(spec, i)
    if not 0 <= j < spec.sizes[i]:
        raise UsageError(f"agent index {j} out of range [0, {spec.sizes[i]}) in cluster {i}")


def _as_joint(spec: GameSpec, x: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (spec.dimension,):
        raise UsageError(f"joint action must have last dimension {spec.dimension}, got shape {arr.shape}")
    return arr


def is_feasible(spec: GameSpec, x: np.ndarray) -> bool:
    arr = np.asarray(x, dtype=float)
    return bool(np.all(arr >= spec.lower) and np.all(arr <= spec.upper))


def require_feasible(spec: GameSpec, x: np.ndarray, cluster: int | None = None, agent: int | None = None) -> None:
    if not is_feasible(spec, x):
        where = "" if cluster is None else f" (cluster {cluster}, agent {agent})"
        raise FeasibilityError(f"joint action outside the action set{where}", cluster=cluster, agent=agent)


def _finite(value: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{what} produced a non-finite value")
    return value


def eval_local_cost(spec: GameSpec, i: int, j: int, x: Sequence[float] | np.ndarray) -> float:
    """J_i^j(x) for a single feasible joint action."""
    _check_agent(spec, i, j)
    arr = _as_joint(spec, x)
    require_feasible(spec, arr, cluster=i, agent=j)
    return float(_finite(spec.cost.local_cost(i, j, arr), f"local cost ({i}, {j})"))


def cluster_cost_batch(spec: GameSpec, i: int, x: np.ndarray) -> np.ndarray:
    """Unchecked, batched cluster cost (1/n_i) sum_j J_i^j."""
    total = sum(spec.cost.local_cost(i, j, x) for j in range(spec.sizes[i]))
    return np.asarray(total, dtype=float) / spec.sizes[i]


def eval_cluster_cost(spec: GameSpec, i: int, x: Sequence[float] | np.ndarray) -> float:
    _check_cluster(spec, i)
    arr = _as_joint(spec, x)
    require_feasible(spec, arr, cluster=i)
    return float(_finite(cluster_cost_batch(spec, i, arr), f"cluster cost {i}"))


def _fd_gradient(spec: GameSpec, fn: Callable[[np.ndarray], np.ndarray], i: int, x: np.ndarray) -> np.ndarray:
    if not spec.allow_finite_differences:
        raise UnsupportedOperationError(
            f"cost model '{spec.cost.name}' has no analytic gradient and finite differences are disabled"
        )
    sl = spec.cluster_slice(i)
    grad = np.empty(x.shape[:-1] + (spec.sizes[i],))
    for k, idx in enumerate(range(sl.start, sl.stop)):
        step = np.zeros(spec.dimension)
        step[idx] = FD_STEP
        grad[..., k] = (fn(x + step) - fn(x - step)) / (2.0 * FD_STEP)
    return grad


def local_gradient(spec: GameSpec, i: int, j: int, x: Sequence[float] | np.ndarray) -> np.ndarray:
    """grad_{x_i} J_i^j(x): analytic when the cost model has it, else central differences."""
    _check_agent(spec, i, j)
    arr = _as_joint(spec, x)
    grad = spec.cost.local_gradient(i, j, arr)
    if grad is None:
        grad = _fd_gradient(spec, lambda y: spec.cost.local_cost(i, j, y), i, arr)
    return _finite(np.asarray(grad, dtype=float), f"local gradient ({i}, {j})")


def exact_cluster_gradient(spec: GameSpec, i: int, x: Sequence[float] | np.ndarray) -> np.ndarray:
    """grad_{x_i} J_i(x_i, x_-i) with J_i the agent-averaged cluster cost."""
    _check_cluster(spec, i)
    arr = _as_joint(spec, x)
    grad = spec.cost.cluster_gradient(i, arr)
    if grad is None:
        locals_ = [spec.cost.local_gradient(i, j, arr) for j in range(spec.sizes[i])]
        if all(g is not None for g in locals_):
            grad = sum(locals_) / spec.sizes[i]
        else:
            grad = _fd_gradient(spec, lambda y: cluster_cost_batch(spec, i, y), i, arr)
    return _finite(np.asarray(grad, dtype=float), f"cluster gradient {i}")


def game_mapping(spec: GameSpec, x: Sequence[float] | np.ndarray) -> np.ndarray:
    """F(x): stacked cluster gradients."""
    arr = _as_joint(spec, x)
    return np.concatenate([exact_cluster_gradient(spec, i, arr) for i in range(spec.cluster_count)], axis=-1)


def project_cluster(cluster: ClusterSpec, v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Euclidean projection onto the cluster box (componentwise clamp)."""
    arr = np.asarray(v, dtype=float)
    if arr.shape[-1:] != (cluster.agent_count,):
        raise UsageError(f"vector must have last dimension {cluster.agent_count}, got shape {arr.shape}")
    return np.clip(arr, cluster.lower, cluster.upper)


def project_joint(spec: GameSpec, x: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.clip(_as_joint(spec, x), spec.lower, spec.upper)


def default_safety_ball(intervals: Sequence[ActionInterval]) -> tuple[tuple[float, ...], float]:
    """Largest ball centered at the box midpoint."""
    if not intervals:
        raise ConstructionError("a cluster needs at least one interval")
    for iv in intervals:
        if not iv.lower < iv.upper:
            raise ConstructionError(f"degenerate interval [{iv.lower}, {iv.upper}]")
    center = tuple(iv.midpoint for iv in intervals)
    radius = min(iv.half_width for iv in intervals)
    return center, radius


def make_cluster(
    bounds: Sequence[tuple[float, float]],
    safety_center: Sequence[float] | None = None,
    safety_radius: float | None = None,
) -> ClusterSpec:
    """Build a ClusterSpec from (lower, upper) pairs, defaulting the safety ball."""
    try:
        intervals = tuple(ActionInterval(lower=lo, upper=hi) for lo, hi in bounds)
    except ValidationError as exc:
        raise ConstructionError(f"invalid action interval: {exc.errors()[0]['msg']}") from exc
    center, radius = default_safety_ball(intervals)
    if safety_center is not None:
        center = tuple(float(v) for v in safety_center)
    if safety_radius is not None:
        radius = float(safety_radius)
    try:
        return ClusterSpec(intervals=intervals, safety_center=center, safety_radius=radius)
    except ValidationError as exc:
        raise ConstructionError(f"invalid cluster: {exc.errors()[0]['msg']}") from exc


def build_cournot_game(params: CournotParams, safety: Sequence[tuple[Sequence[float], float] | None] | None = None) -> GameSpec:
    """Cournot game from its parameter table; safety balls default to the largest centered ball."""
    clusters = []
    for i, agents in enumerate(params.clusters):
        override = safety[i] if safety is not None and i < len(safety) else None
        center, radius = override if override is not None else (None, None)
        clusters.append(make_cluster([(a.lower, a.upper) for a in agents], center, radius))
    logger.debug("[game] built Cournot game with cluster sizes %s", [len(c) for c in params.clusters])
    return GameSpec(clusters=tuple(clusters), cost=CournotCost(params), name="cournot")


def build_quadratic_game(
    bounds: Sequence[Sequence[tuple[float, float]]],
    targets: Sequence[Sequence[float]],
    offset: float = 0.0,
) -> GameSpec:
    """Separable test game J_i^j = ||x_i - c_i||^2 / 2 (+ offset) on the given boxes."""
    if len(bounds) != len(targets):
        raise ConstructionError("one target vector per cluster is required")
    for box, target in zip(bounds, targets):
        if len(box) != len(target):
            raise ConstructionError("target length must match the cluster size")
    clusters = tuple(make_cluster(box) for box in bounds)
    return GameSpec(clusters=clusters, cost=SeparableQuadraticCost(targets, offset), name="quadratic-separable")
