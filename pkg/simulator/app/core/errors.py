"""
Error hierarchy shared by every service.

Validations that produce reports (mixing matrices, schedules, KKT checks) never raise;
they return a ValidationReport instead. Everything else raises one of the classes below.
"""
from dataclasses import dataclass, field


class ClusterGameError(RuntimeError):
    """Base class for all simulator errors."""


class UsageError(ClusterGameError, ValueError):
    """Bad index, dimension mismatch or invalid argument."""


class ConstructionError(ClusterGameError, ValueError):
    """A domain object violates its construction invariants."""


class FeasibilityError(ClusterGameError):
    """A point outside the action set was submitted to an evaluator or the oracle."""

    def __init__(self, message: str, cluster: int | None = None, agent: int | None = None):
        super().__init__(message)
        self.cluster = cluster
        self.agent = agent


class UnsupportedOperationError(ClusterGameError):
    """The cost model cannot provide the requested quantity."""


class ScheduleViolationError(ClusterGameError):
    """Step/radius schedule makes a query infeasible or breaks the balance constraints."""


class OracleProtocolError(ClusterGameError):
    """Query round is incomplete or malformed."""


class NumericError(ClusterGameError, ArithmeticError):
    """NaN or infinity produced by a cost model or the game mapping."""


class ScenarioError(ClusterGameError):
    """Base class for scenario file problems."""


class ScenarioSyntaxError(ScenarioError):
    """The scenario file is not valid TOML."""


class ScenarioFieldError(ScenarioError):
    """Missing or unknown fields; `fields` lists the offending dotted paths."""

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []


class ScenarioConstraintError(ScenarioError):
    """The scenario parses but violates a semantic constraint."""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass
class ValidationReport:
    """Collected invariant violations. Empty means valid."""

    subject: str
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str) -> None:
        self.violations.append(Violation(code=code, message=message))

    def extend(self, other: "ValidationReport") -> None:
        self.violations.extend(other.violations)

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "ok": self.ok,
            "violations": [{"code": v.code, "message": v.message} for v in self.violations],
        }
