"""
One-point gradient estimation from a single oracle value.

An agent perturbs its local estimate towards the cluster's safety ball, queries the
oracle once, and scales the returned value along the sampled unit direction:
    query = (1 - sigma / r) x + sigma (z + p / r)
    d     = (n_i / sigma) * value * z
"""
import logging
from dataclasses import dataclass

import numpy as np

from app.core.errors import ScheduleViolationError, UsageError
from app.schemas.game import ClusterSpec
from app.services.game_model import GameSpec, local_gradient, require_feasible

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SphereSample:
    direction: np.ndarray


@dataclass(frozen=True)
class GradientEstimate:
    """d together with every ingredient it was built from (one oracle value per estimate)."""

    d: np.ndarray
    sample: SphereSample
    sigma: float
    oracle_value: float


def sample_unit_sphere(dim: int, rng: np.random.Generator) -> SphereSample:
    """Uniform direction on the unit sphere of R^dim (normalized standard normal draw)."""
    if dim < 1:
        raise UsageError(f"sphere dimension must be >= 1, got {dim}")
    v = rng.standard_normal(dim)
    return SphereSample(direction=v / np.linalg.norm(v))


def sample_unit_sphere_batch(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if dim < 1:
        raise UsageError(f"sphere dimension must be >= 1, got {dim}")
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _check_radius(sigma: float, cluster: ClusterSpec) -> None:
    if not sigma > 0:
        raise UsageError(f"query radius must be positive, got {sigma}")
    if not sigma < cluster.safety_radius:
        raise ScheduleViolationError(
            f"query radius {sigma} must be smaller than the safety radius {cluster.safety_radius}"
        )


def query_points(x: np.ndarray, z: np.ndarray, sigma: float, cluster: ClusterSpec) -> np.ndarray:
    """Vectorized query construction; x and z broadcast over leading axes. No checks."""
    shrink = sigma / cluster.safety_radius
    center = np.asarray(cluster.safety_center, dtype=float)
    query = (1.0 - shrink) * x + sigma * z + shrink * center
    # Rounding can leave a component an ulp outside the box; the exact point is inside
    return np.clip(query, cluster.lower, cluster.upper)


def build_query_point(x: np.ndarray, z: SphereSample, sigma: float, cluster: ClusterSpec) -> np.ndarray:
    """Feasible query: convex combination of x and a point of the safety ball."""
    _check_radius(sigma, cluster)
    arr = np.asarray(x, dtype=float)
    if arr.shape != (cluster.agent_count,):
        raise UsageError(f"local estimate must have {cluster.agent_count} components, got shape {arr.shape}")
    if np.any(arr < cluster.lower) or np.any(arr > cluster.upper):
        raise UsageError("local estimate lies outside the cluster box")
    return query_points(arr, z.direction, sigma, cluster)


def estimate_gradient(oracle_value: float, z: SphereSample, sigma: float, n_i: int) -> GradientEstimate:
    if not sigma > 0:
        raise UsageError(f"query radius must be positive, got {sigma}")
    d = (n_i / sigma) * float(oracle_value) * z.direction
    return GradientEstimate(d=d, sample=z, sigma=float(sigma), oracle_value=float(oracle_value))


@dataclass(frozen=True)
class ErrorMoments:
    mean_error_norm: float
    mean_sq_error_norm: float
    bias: np.ndarray
    samples: int


def estimator_error_moments(
    spec: GameSpec,
    i: int,
    j: int,
    x: np.ndarray,
    sigma: float,
    samples: int,
    rng: np.random.Generator,
    batch: int = 200_000,
) -> ErrorMoments:
    """
    Monte-Carlo moments of e = d - grad_i J_i^j(x) with the other clusters held at x.

    Returns E||e||, E||e||^2 and the mean error vector (the estimator's bias).
    """
    if samples < 1:
        raise UsageError("samples must be positive")
    arr = np.asarray(x, dtype=float)
    require_feasible(spec, arr, cluster=i, agent=j)
    cluster = spec.clusters[i]
    _check_radius(sigma, cluster)
    n_i = spec.sizes[i]
    sl = spec.cluster_slice(i)
    reference = local_gradient(spec, i, j, arr)

    sum_norm = 0.0
    sum_sq = 0.0
    sum_err = np.zeros(n_i)
    done = 0
    while done < samples:
        count = min(batch, samples - done)
        z = sample_unit_sphere_batch(n_i, count, rng)
        joint = np.repeat(arr[None, :], count, axis=0)
        joint[:, sl] = query_points(arr[sl], z, sigma, cluster)
        values = spec.cost.local_cost(i, j, joint)
        err = (n_i / sigma) * values[:, None] * z - reference
        norms_sq = np.einsum("ij,ij->i", err, err)
        sum_sq += float(norms_sq.sum())
        sum_norm += float(np.sqrt(norms_sq).sum())
        sum_err += err.sum(axis=0)
        done += count
    logger.debug("[estimator] error moments for (%d, %d) at sigma=%g over %d samples", i, j, sigma, samples)
    return ErrorMoments(
        mean_error_norm=sum_norm / samples,
        mean_sq_error_norm=sum_sq / samples,
        bias=sum_err / samples,
        samples=samples,
    )
