"""
Scenario files: parse and validate TOML into runtime objects, write canonical TOML back,
and hash the canonical content.
"""
import hashlib
import json
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import tomli_w
from pydantic import ValidationError

from app.core.errors import (
    ClusterGameError,
    ConstructionError,
    ScenarioConstraintError,
    ScenarioFieldError,
    ScenarioSyntaxError,
    UsageError,
)
from app.schemas.game import CournotParams
from app.schemas.scenario import CournotGameConfig, GraphConfig, ScenarioConfig
from app.services.comm_graph import (
    MixingMatrix,
    UndirectedGraph,
    build_metropolis_weights,
    preset_graph,
    validate_mixing,
)
from app.services.game_model import GameSpec, build_cournot_game, build_quadratic_game, make_cluster
from app.services.gradient_play import Schedule, validate_schedule
from app.services.oracle import CombinationMode, CombinationPolicy
from app.services.rng import SeededStreams

logger = logging.getLogger(__name__)

_FIELD_ERROR_TYPES = {"missing", "extra_forbidden", "union_tag_invalid", "union_tag_not_found"}


@dataclass(frozen=True)
class Scenario:
    """A validated scenario and the runtime objects built from it."""

    config: ScenarioConfig
    spec: GameSpec
    graphs: tuple[UndirectedGraph, ...]
    mixing: tuple[MixingMatrix, ...]
    schedule: Schedule
    content_hash: str
    source: Path | None = None

    def policy(self, seed: int) -> CombinationPolicy:
        run = self.config.run
        return CombinationPolicy(
            mode=CombinationMode(run.policy),
            fixed=tuple(run.fixed_agents),
            streams=SeededStreams(seed),
        )


def _sorted(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _sorted(value[key]) for key in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_sorted(v) for v in value]
    return value


def canonical_dict(config: ScenarioConfig) -> dict[str, Any]:
    """Fully defaulted, key-sorted plain data; the basis for writing and hashing."""
    return _sorted(config.model_dump(mode="json", exclude_none=True))


def _simulated_view(config: ScenarioConfig) -> dict[str, Any]:
    """Canonical data with settings that cannot affect a run removed or filled in."""
    data = canonical_dict(config)
    graphs = data.get("graphs") or [{"preset": "complete"} for _ in data["game"]["clusters"]]
    normalized = []
    for graph in graphs:
        graph = dict(graph)
        if graph["preset"] != "erdos-renyi":
            graph.pop("p", None)
            graph.pop("seed", None)
        if graph["preset"] != "edges":
            graph.pop("edges", None)
        normalized.append(graph)
    data["graphs"] = normalized
    run = data["run"]
    if run.get("policy") != "fixed-agent":
        run.pop("fixed_agents", None)
    if run.get("initial") != "explicit":
        run.pop("initial_explicit", None)
    return data


def scenario_hash(config: ScenarioConfig) -> str:
    payload = json.dumps(_simulated_view(config), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_scenario(config: ScenarioConfig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(tomli_w.dumps(canonical_dict(config)), encoding="utf-8")


def _locate(text: str, loc: tuple[Any, ...]) -> str:
    """Best-effort 'line N' for the last named key of a pydantic error location."""
    keys = [part for part in loc if isinstance(part, str)]
    if not keys:
        return "top level"
    pattern = re.compile(rf"^\s*(\[+\s*)?([\w.]*\.)?{re.escape(keys[-1])}\s*(=|\]|\.)")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return f"line {number}"
    return "not present"


def _format_error(text: str, err: dict[str, Any]) -> tuple[str, str]:
    path = ".".join(str(p) for p in err["loc"])
    return path, f"{path} ({_locate(text, err['loc'])}): {err['msg']}"


def _validate_config(data: dict[str, Any], text: str, origin: str) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        errors = exc.errors()
        field_errors = [e for e in errors if e["type"] in _FIELD_ERROR_TYPES]
        if field_errors:
            formatted = [_format_error(text, e) for e in field_errors]
            raise ScenarioFieldError(
                f"{origin}: " + "; ".join(msg for _, msg in formatted),
                fields=[path for path, _ in formatted],
            ) from exc
        raise ScenarioConstraintError(
            f"{origin}: " + "; ".join(_format_error(text, e)[1] for e in errors)
        ) from exc


def _build_game(config: ScenarioConfig) -> GameSpec:
    game = config.game
    if isinstance(game, CournotGameConfig):
        params = CournotParams(
            clusters=tuple(tuple(cluster.agents) for cluster in game.clusters),
            price_constant=game.price_constant,
        )
        safety = [
            None if cluster.safety is None else (cluster.safety.center, cluster.safety.radius)
            for cluster in game.clusters
        ]
        return build_cournot_game(params, safety)
    spec = build_quadratic_game(
        [cluster.bounds for cluster in game.clusters],
        [cluster.target for cluster in game.clusters],
        game.offset,
    )
    overrides = [cluster.safety for cluster in game.clusters]
    if any(s is not None for s in overrides):
        clusters = tuple(
            spec.clusters[i]
            if s is None
            else make_cluster(game.clusters[i].bounds, s.center, s.radius)
            for i, s in enumerate(overrides)
        )
        spec = GameSpec(clusters=clusters, cost=spec.cost, name=spec.name)
    return spec


def _build_graph(graph: GraphConfig, node_count: int) -> UndirectedGraph:
    if graph.preset == "edges":
        if graph.edges is None:
            raise ConstructionError("preset 'edges' requires an explicit edge list")
        return UndirectedGraph.from_edges(node_count, graph.edges)
    return preset_graph(graph.preset, node_count, p=graph.p, seed=graph.seed)


def build_scenario(config: ScenarioConfig, source: Path | None = None) -> Scenario:
    """Build and cross-validate every runtime object; all failures become ScenarioConstraintError."""
    origin = str(source) if source is not None else "scenario"
    try:
        spec = _build_game(config)
    except (ValidationError, ClusterGameError) as exc:
        raise ScenarioConstraintError(f"{origin}: game: {exc}") from exc

    graph_configs = config.graphs or [GraphConfig() for _ in range(spec.cluster_count)]
    if len(graph_configs) != spec.cluster_count:
        raise ScenarioConstraintError(
            f"{origin}: graphs: expected {spec.cluster_count} graphs (one per cluster), got {len(graph_configs)}"
        )
    graphs, mixing = [], []
    for i, graph_config in enumerate(graph_configs):
        try:
            graph = _build_graph(graph_config, spec.sizes[i])
            weights = build_metropolis_weights(graph)
        except ClusterGameError as exc:
            raise ScenarioConstraintError(f"{origin}: graphs.{i}: {exc}") from exc
        report = validate_mixing(weights, graph)
        if not report.ok:
            raise ScenarioConstraintError(
                f"{origin}: graphs.{i}: " + "; ".join(v.message for v in report.violations)
            )
        graphs.append(graph)
        mixing.append(weights)

    s = config.schedule
    schedule = Schedule(alpha0=s.alpha0, sigma0=s.sigma0, a=s.a, b=s.b, t_offset=s.t_offset)
    report = validate_schedule(schedule, spec)
    if not report.ok:
        raise ScenarioConstraintError(
            f"{origin}: schedule: " + "; ".join(v.message for v in report.violations)
        )

    run = config.run
    if run.policy == "fixed-agent":
        try:
            CombinationPolicy(mode=CombinationMode.FIXED_AGENT, fixed=tuple(run.fixed_agents)).validate(spec)
        except UsageError as exc:
            raise ScenarioConstraintError(f"{origin}: run.fixed_agents: {exc}") from exc
    if run.initial == "explicit":
        explicit = run.initial_explicit or []
        if len(explicit) != spec.cluster_count or any(
            len(vec) != n for vec, n in zip(explicit, spec.sizes)
        ):
            raise ScenarioConstraintError(f"{origin}: run.initial_explicit: one vector per cluster of matching size")

    return Scenario(
        config=config,
        spec=spec,
        graphs=tuple(graphs),
        mixing=tuple(mixing),
        schedule=schedule,
        content_hash=scenario_hash(config),
        source=source,
    )


def loads_scenario(text: str, origin: str = "scenario") -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioSyntaxError(f"{origin}: invalid TOML: {exc}") from exc
    config = _validate_config(data, text, origin)
    return build_scenario(config, Path(origin) if origin != "scenario" else None)


def load_scenario(path: Path | str) -> Scenario:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    scenario = loads_scenario(text, origin=str(path))
    logger.info("[scenario] loaded %s (game=%s, hash=%s)", path, scenario.spec.name, scenario.content_hash[:12])
    return scenario


def parse_scenario(path: Path | str) -> ScenarioConfig:
    """Fully validated configuration of a scenario file."""
    return load_scenario(path).config
