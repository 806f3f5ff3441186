from enum import Enum
from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Variant(str, Enum):
    """Planner variants: the full algorithm, its ablations and the baselines."""
    CB = "CB"
    DEC = "DEC"
    GU = "GU"
    NE = "NE"
    FA = "FA"
    INDEPENDENT = "INDEPENDENT"
    CARDENTS = "CARDENTS"


class ScheduleKind(str, Enum):
    INVERSE_LOG = "inverse-log"
    FAST_DECAY = "fast-decay"
    ZERO = "zero"


# Models for planner configuration
class PlannerConfig(BaseModel):
    """Hyperparameters of one planner. Variant-specific overrides are applied at resolution time."""
    model_config = ConfigDict(frozen=True)

    name: Optional[str] = None
    variant: Variant = Variant.CB
    epsilon: float = Field(0.5, gt=0)
    gamma: float = Field(0.9, ge=0.5, lt=1.0)
    alpha_init: float = Field(1.0, gt=0)
    beta_init: float = Field(1.0, ge=0)
    communication_period: int = Field(10, ge=1)
    inner_iterations: Optional[int] = Field(None, ge=1)
    compression_size: int = Field(10, ge=1)
    planning_budget: int = Field(1000, ge=1)
    plan_temperature: float = Field(1.0, gt=0)
    sample_count: int = Field(10, ge=1)

    @property
    def label(self) -> str:
        return self.name or self.variant.value

    @property
    def iterations_per_round(self) -> int:
        """Length of the inner loop between two communication rounds."""
        return self.inner_iterations or self.communication_period


# Models for environment descriptors
class DeceptiveTreeParams(BaseModel):
    """Multi-agent D-chain. `branching` defaults to the agent count."""
    kind: Literal["deceptive-tree"] = "deceptive-tree"
    depth: int = Field(10, ge=1)
    branching: Optional[int] = Field(None, ge=2)
    agents: int = Field(2, ge=1)
    reward_variant: Literal["standard", "modified"] = "standard"

    @property
    def resolved_branching(self) -> int:
        return self.branching or max(2, self.agents)

    @property
    def env_id(self) -> str:
        return f"dchain-{self.reward_variant}-D{self.depth}-K{self.resolved_branching}-N{self.agents}"


class FrozenLakeParams(BaseModel):
    """Multi-goal Frozen Lake, either generated from a seed or loaded from a text grid."""
    kind: Literal["frozen-lake"] = "frozen-lake"
    width: int = Field(8, ge=1)
    height: int = Field(12, ge=1)
    hole_probability: float = Field(0.2, ge=0.0, lt=1.0)
    goal_count: int = Field(2, ge=1)
    agents: int = Field(2, ge=1)
    step_budget: int = Field(100, ge=1)
    instance_seed: int = 0
    attempt_cap: int = Field(10_000, ge=1)
    map_path: Optional[str] = None

    @property
    def env_id(self) -> str:
        if self.map_path:
            return f"frozenlake-{self.map_path.rsplit('/', 1)[-1].split('.')[0]}-N{self.agents}"
        return f"frozenlake-{self.width}x{self.height}-s{self.instance_seed}-N{self.agents}"


class CoverageParams(BaseModel):
    """Synthetic graph-coverage inspection instance."""
    kind: Literal["coverage"] = "coverage"
    vertex_count: int = Field(50, ge=1)
    target_count: int = Field(20, ge=1)
    radius: float = Field(5.0, gt=0)
    agents: int = Field(3, ge=1)
    budget: float = Field(60.0, gt=0)
    instance_seed: int = 0
    instance_path: Optional[str] = None

    @model_validator(mode="after")
    def check_counts(self):
        if self.target_count > self.vertex_count:
            raise ValueError("target_count cannot exceed vertex_count")
        return self

    @property
    def env_id(self) -> str:
        if self.instance_path:
            return f"coverage-{self.instance_path.rsplit('/', 1)[-1].split('.')[0]}-N{self.agents}"
        return f"coverage-V{self.vertex_count}-T{self.target_count}-s{self.instance_seed}-N{self.agents}"


EnvironmentDescriptor = Annotated[
    Union[DeceptiveTreeParams, FrozenLakeParams, CoverageParams],
    Field(discriminator="kind"),
]


class EnvironmentDocument(BaseModel):
    """Standalone environment document, as read by the `oracle` subcommand."""
    environment: EnvironmentDescriptor


# Models for experiments
class ExperimentSpec(BaseModel):
    """A batch of seeded trials for one environment and a list of planners."""
    name: str = "experiment"
    environment: EnvironmentDescriptor
    planners: List[PlannerConfig] = Field(..., min_length=1)
    seeds: Optional[List[int]] = None
    base_seed: int = 0
    trial_count: int = Field(1, ge=1)
    cadence: int = Field(100, ge=1)
    output_dir: Optional[str] = None
    online: bool = False
    regret: Optional[Literal["exact", "reference", "none"]] = None

    @model_validator(mode="after")
    def check_seeds(self):
        if self.seeds is not None and not self.seeds:
            raise ValueError("seeds must not be empty")
        return self

    def seed_list(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(self.base_seed, self.base_seed + self.trial_count))

    def regret_mode(self) -> str:
        if self.regret is not None:
            return self.regret
        return "exact" if self.environment.kind == "deceptive-tree" else "none"


class TrialRecord(BaseModel):
    """One metrics row per (trial, cadence point)."""
    env_id: str
    algorithm: str
    seed: int
    iteration: int
    simple_regret: Optional[float] = None
    joint_score: float
    pr1: int = Field(0, ge=0, le=1)
    pr2: int = Field(0, ge=0, le=1)
    wallclock_ms: int = 0

    @model_validator(mode="after")
    def check_pr_flags(self):
        if self.pr2 > self.pr1:
            raise ValueError("pr2 cannot exceed pr1")
        return self


class SummaryPoint(BaseModel):
    """Mean and 95% half-width of each metric at one cadence point."""
    algorithm: str
    iteration: int
    trials: int
    joint_score_mean: float
    joint_score_ci: float
    simple_regret_mean: Optional[float] = None
    simple_regret_ci: Optional[float] = None
    pr1_mean: float
    pr1_ci: float
    pr2_mean: float
    pr2_ci: float


class ExperimentSummary(BaseModel):
    points: List[SummaryPoint]
    regret_reference: Optional[Literal["exact", "lower-bound"]] = None


class ReportDocument(BaseModel):
    """JSON report: the rows plus the summary block."""
    records: List[TrialRecord]
    summary: Optional[ExperimentSummary] = None


class SweepEntry(BaseModel):
    rank: int
    parameters: Dict[str, float]
    metric: Literal["joint_score", "simple_regret"]
    value: float


class SweepReport(BaseModel):
    experiment: str
    entries: List[SweepEntry]


# Models for the coverage instance document
class CoverageVertex(BaseModel):
    id: int
    x: float
    y: float


class CoverageEdge(BaseModel):
    id: int
    u: int
    v: int
    weight: float = Field(..., gt=0)


class CoverageTarget(BaseModel):
    id: int
    x: float
    y: float
    covering_edges: List[int] = Field(..., min_length=1)


class GraphCoverageSpec(BaseModel):
    """Undirected roadmap, depot, inspection targets and the per-agent travel budget."""
    vertices: List[CoverageVertex]
    edges: List[CoverageEdge]
    targets: List[CoverageTarget] = Field(..., min_length=1)
    depot: int
    budget: float = Field(..., gt=0)
    agents: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_references(self):
        edge_ids = {edge.id for edge in self.edges}
        vertex_ids = {vertex.id for vertex in self.vertices}
        if self.depot not in vertex_ids:
            raise ValueError(f"depot {self.depot} is not a vertex")
        for edge in self.edges:
            if edge.u not in vertex_ids or edge.v not in vertex_ids:
                raise ValueError(f"edge {edge.id} references an unknown vertex")
        for target in self.targets:
            missing = [e for e in target.covering_edges if e not in edge_ids]
            if missing:
                raise ValueError(f"target {target.id} references unknown edges {missing}")
        return self
