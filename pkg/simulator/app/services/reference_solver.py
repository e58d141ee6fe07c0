"""
Ground-truth Nash equilibrium from exact gradients.

The equilibrium is the solution of the variational inequality VI(Omega, F) over the
product of cluster boxes. It is computed with the extragradient method and cross-checked
by first-order (KKT) conditions on the box and by brute-force best responses.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import UsageError, ValidationReport
from app.schemas.run import EquilibriumReport
from app.services.game_model import GameSpec, cluster_cost_batch, game_mapping, project_joint

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1_000_000
LIPSCHITZ_SAMPLES = 100
# Backtracking accepts tau when tau ||F(x) - F(y)|| <= BACKTRACK_RATIO ||x - y||
BACKTRACK_RATIO = 0.9


@dataclass(frozen=True)
class VISolution:
    point: np.ndarray
    residual: float
    iterations: int
    converged: bool
    step: float
    residual_history: np.ndarray = field(repr=False)


def natural_residual(spec: GameSpec, x: np.ndarray) -> float:
    """||x - proj_Omega(x - F(x))||; zero exactly at the equilibrium."""
    return float(np.linalg.norm(x - project_joint(spec, x - game_mapping(spec, x))))


def estimate_lipschitz(spec: GameSpec, samples: int = LIPSCHITZ_SAMPLES, seed: int = 0) -> float:
    """Largest ||F(u) - F(v)|| / ||u - v|| over random feasible pairs."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        u = rng.uniform(spec.lower, spec.upper)
        v = rng.uniform(spec.lower, spec.upper)
        gap = np.linalg.norm(u - v)
        if gap > 0:
            best = max(best, float(np.linalg.norm(game_mapping(spec, u) - game_mapping(spec, v)) / gap))
    return best


def solve_vi(
    spec: GameSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    x0: np.ndarray | None = None,
    seed: int = 0,
) -> VISolution:
    """
    Extragradient with backtracking:
        y  = proj(x - tau F(x))
        x+ = proj(x - tau F(y))
    tau starts at 1 / L_est and is halved whenever tau ||F(x) - F(y)|| > 0.9 ||x - y||.
    Stops when the natural residual drops to `tol`; otherwise returns converged=False.
    """
    if not tol > 0:
        raise UsageError(f"tolerance must be positive, got {tol}")
    x = spec.midpoint() if x0 is None else project_joint(spec, x0)
    lipschitz = estimate_lipschitz(spec, seed=seed)
    tau = 1.0 / lipschitz if lipschitz > 0 else 1.0

    history = []
    iterations = 0
    residual = natural_residual(spec, x)
    history.append(residual)
    while residual > tol and iterations < max_iter:
        fx = game_mapping(spec, x)
        y = project_joint(spec, x - tau * fx)
        fy = game_mapping(spec, y)
        if tau * np.linalg.norm(fx - fy) > BACKTRACK_RATIO * np.linalg.norm(x - y):
            tau *= 0.5
            logger.debug("[solver] backtracking: tau -> %g", tau)
            continue
        x = project_joint(spec, x - tau * fy)
        iterations += 1
        residual = natural_residual(spec, x)
        history.append(residual)

    converged = residual <= tol
    if converged:
        logger.info("[solver] converged in %d iterations (residual %.3e, tau %.3g)", iterations, residual, tau)
    else:
        logger.warning("[solver] not converged after %d iterations (residual %.3e)", iterations, residual)
    return VISolution(
        point=x,
        residual=residual,
        iterations=iterations,
        converged=converged,
        step=tau,
        residual_history=np.asarray(history),
    )


@dataclass(frozen=True)
class KKTReport:
    max_violation: float
    violations: np.ndarray
    report: ValidationReport

    @property
    def ok(self) -> bool:
        return self.report.ok


def verify_ne_kkt(spec: GameSpec, x: np.ndarray, tol: float = 1e-6) -> KKTReport:
    """
    First-order equilibrium conditions on the box, per component of F(x):
    interior -> |F| <= tol, at lower bound -> F >= -tol, at upper bound -> F <= tol.
    """
    arr = np.asarray(x, dtype=float)
    grad = game_mapping(spec, arr)
    at_lower = arr <= spec.lower
    at_upper = arr >= spec.upper
    violations = np.where(
        at_lower,
        np.maximum(0.0, -grad),
        np.where(at_upper, np.maximum(0.0, grad), np.abs(grad)),
    )
    report = ValidationReport(subject="KKT conditions")
    for i in range(spec.cluster_count):
        for j, value in enumerate(violations[spec.cluster_slice(i)]):
            if value > tol:
                report.add("kkt", f"cluster {i} agent {j}: first-order violation {value:.3e} > {tol:g}")
    return KKTReport(max_violation=float(violations.max(initial=0.0)), violations=violations, report=report)


def best_response_check(
    spec: GameSpec,
    x: np.ndarray,
    i: int,
    grid: int = 15,
    random_samples: int = 10_000,
    seed: int = 0,
) -> float:
    """
    How much cluster i could gain by deviating alone: J_i(x) minus the best cluster cost
    over a grid^n_i lattice of its box and random feasible points (0 means no gain found).
    """
    if not 2 <= grid <= 15:
        raise UsageError(f"grid must be between 2 and 15, got {grid}")
    arr = np.asarray(x, dtype=float)
    lower, upper = spec.cluster_bounds[i]
    axes = [np.linspace(lo, hi, grid) for lo, hi in zip(lower, upper)]
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.sizes[i])
    rng = np.random.default_rng(seed)
    candidates = np.vstack([lattice, rng.uniform(lower, upper, size=(random_samples, spec.sizes[i]))])

    joint = np.repeat(arr[None, :], candidates.shape[0], axis=0)
    joint[:, spec.cluster_slice(i)] = candidates
    best = float(np.min(cluster_cost_batch(spec, i, joint)))
    current = float(cluster_cost_batch(spec, i, arr))
    return max(0.0, current - best)


def equilibrium_report(
    spec: GameSpec,
    scenario_hash: str = "",
    tol: float = DEFAULT_TOL,
    kkt_tol: float = 1e-6,
    grid: int = 15,
    seed: int = 0,
) -> EquilibriumReport:
    """Solve for the equilibrium and attach the KKT and per-cluster best-response checks."""
    solution = solve_vi(spec, tol=tol, seed=seed)
    kkt = verify_ne_kkt(spec, solution.point, tol=kkt_tol)
    gaps = [best_response_check(spec, solution.point, i, grid=grid, seed=seed) for i in range(spec.cluster_count)]
    return EquilibriumReport(
        scenario_hash=scenario_hash,
        point=solution.point.tolist(),
        clusters=[part.tolist() for part in spec.split(solution.point)],
        residual=solution.residual,
        iterations=solution.iterations,
        converged=solution.converged,
        kkt_max_violation=kkt.max_violation,
        kkt_ok=kkt.ok,
        best_response_gaps=gaps,
    )
