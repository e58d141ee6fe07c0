"""
Pydantic schemas for scenario files (TOML). Unknown keys are rejected everywhere so a
typo never silently falls back to a default.
"""
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.game import CournotAgent


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SafetyBallConfig(_Strict):
    center: list[float] = Field(..., description="Safety ball center p_i")
    radius: float = Field(..., gt=0, description="Safety ball radius r_i")


class CournotClusterConfig(_Strict):
    agents: list[CournotAgent] = Field(..., min_length=1)
    safety: SafetyBallConfig | None = Field(default=None, description="Override of the centered default ball")


class CournotGameConfig(_Strict):
    name: Literal["cournot"]
    price_constant: float = Field(..., description="P_c of the linear price P(x) = P_c - sum(x)")
    clusters: list[CournotClusterConfig] = Field(..., min_length=1)


class QuadraticClusterConfig(_Strict):
    bounds: list[tuple[float, float]] = Field(..., min_length=1, description="(lower, upper) per agent")
    target: list[float] = Field(..., description="Minimizer c_i of ||x_i - c_i||^2 / 2")
    safety: SafetyBallConfig | None = None


class QuadraticGameConfig(_Strict):
    name: Literal["quadratic-separable"]
    offset: float = Field(default=0.0, description="Constant added to every local cost")
    clusters: list[QuadraticClusterConfig] = Field(..., min_length=1)


GameConfig = Annotated[CournotGameConfig | QuadraticGameConfig, Field(discriminator="name")]


class GraphConfig(_Strict):
    preset: Literal["complete", "ring", "path", "star", "erdos-renyi", "edges"] = "complete"
    edges: list[tuple[int, int]] | None = Field(default=None, description="Explicit edge list (preset = 'edges')")
    p: float = Field(default=0.5, gt=0, le=1, description="Edge probability for erdos-renyi")
    seed: int = Field(default=0, description="Sampling seed for erdos-renyi")


class ScheduleConfig(_Strict):
    alpha0: float = Field(..., description="Step-size scale: alpha_t = alpha0 / t^a")
    sigma0: float = Field(..., description="Query-radius scale: sigma_t = sigma0 / t^b")
    a: float = Field(..., description="Step-size decay exponent")
    b: float = Field(..., description="Query-radius decay exponent")
    t_offset: int = Field(default=1, description="Schedule index of the first step")


class RunConfig(_Strict):
    iterations: int = Field(..., ge=0, description="Number of steps T")
    seeds: list[int] = Field(..., min_length=1)
    record_every: int = Field(default=100, ge=1)
    policy: Literal["uniform-random", "fixed-agent", "round-robin"] = "uniform-random"
    fixed_agents: list[int] = Field(default_factory=list, description="Representative per cluster (fixed-agent)")
    initial: Literal["midpoint", "random", "explicit"] = "midpoint"
    initial_explicit: list[list[float]] | None = None


class ScenarioConfig(_Strict):
    game: GameConfig
    graphs: list[GraphConfig] | None = Field(default=None, description="One graph per cluster; default complete")
    schedule: ScheduleConfig
    run: RunConfig
