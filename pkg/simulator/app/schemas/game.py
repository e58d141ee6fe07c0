"""
Pydantic schemas for the static description of an n-cluster game: per-agent action
intervals, cluster boxes with their safety balls, and the Cournot parameter table.
"""
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ActionInterval(BaseModel):
    """Feasible action set of a single agent."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lower: float = Field(..., description="Lower production / action limit")
    upper: float = Field(..., description="Upper production / action limit")

    @model_validator(mode="after")
    def _nondegenerate(self) -> "ActionInterval":
        if not self.lower < self.upper:
            raise ValueError(f"interval must satisfy lower < upper (got [{self.lower}, {self.upper}])")
        return self

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


class ClusterSpec(BaseModel):
    """
    One cluster: its agents' intervals (the box) and a safety ball inside the box.
    The safety ball keeps every perturbed query point feasible.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    intervals: tuple[ActionInterval, ...] = Field(..., min_length=1, description="One interval per agent")
    safety_center: tuple[float, ...] = Field(..., description="Center p_i of the safety ball")
    safety_radius: float = Field(..., gt=0, description="Radius r_i of the safety ball")

    @model_validator(mode="after")
    def _ball_inside_box(self) -> "ClusterSpec":
        if len(self.safety_center) != len(self.intervals):
            raise ValueError(
                f"safety_center has {len(self.safety_center)} components, cluster has {len(self.intervals)} agents"
            )
        slack = min(
            min(c - iv.lower, iv.upper - c) for c, iv in zip(self.safety_center, self.intervals)
        )
        if self.safety_radius > slack:
            raise ValueError(
                f"safety ball (radius {self.safety_radius}) is not contained in the box (max radius {slack})"
            )
        return self

    @property
    def agent_count(self) -> int:
        return len(self.intervals)

    @property
    def lower(self) -> tuple[float, ...]:
        return tuple(iv.lower for iv in self.intervals)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(iv.upper for iv in self.intervals)


class CournotAgent(BaseModel):
    """Quadratic production cost a x^2 + b x + c of one factory, plus its limits."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(..., gt=0, description="Quadratic coefficient (convex costs need a > 0)")
    b: float = Field(..., description="Linear coefficient")
    c: float = Field(..., description="Fixed cost")
    lower: float = Field(default=0.0, description="Lower production limit")
    upper: float = Field(..., description="Upper production limit")


class CournotParams(BaseModel):
    """Cournot game: companies are clusters, factories are agents, one shared linear price."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    clusters: tuple[tuple[CournotAgent, ...], ...] = Field(..., min_length=1)
    price_constant: float = Field(..., description="P_c in P(x) = P_c - sum of all production")

    @model_validator(mode="after")
    def _price_positive(self) -> "CournotParams":
        if any(len(cluster) == 0 for cluster in self.clusters):
            raise ValueError("every Cournot cluster needs at least one agent")
        total_upper = sum(agent.upper for cluster in self.clusters for agent in cluster)
        if not self.price_constant > total_upper:
            raise ValueError(
                f"price_constant must exceed total upper production {total_upper} so that P(x) > 0"
            )
        return self


# Cournot parameters of the two-company benchmark (4 factories each), P_c = 250.
TABLE_COURNOT = CournotParams(
    clusters=(
        (
            CournotAgent(a=5, b=10, c=1, lower=0, upper=20),
            CournotAgent(a=8, b=11, c=3, lower=0, upper=20),
            CournotAgent(a=4, b=9, c=2, lower=0, upper=20),
            CournotAgent(a=5, b=12, c=5, lower=0, upper=20),
        ),
        (
            CournotAgent(a=3, b=10, c=3, lower=0, upper=10),
            CournotAgent(a=7, b=11, c=2, lower=0, upper=10),
            CournotAgent(a=9, b=12, c=3, lower=0, upper=10),
            CournotAgent(a=2, b=9, c=1, lower=0, upper=10),
        ),
    ),
    price_constant=250.0,
)
