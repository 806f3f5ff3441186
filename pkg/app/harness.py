"""
Experiment driver: seeded trial batches and hyperparameter sweeps.

Trials are independent and can run in a process pool; records are merged by
(planner index, seed) so the worker count never changes the output.
"""
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.algorithms import PlannerError, online_replan_loop, plan_decentralized_episode
from app.coverage import build_graph_coverage, load_coverage_instance, synthesize_coverage_instance
from app.environments import (
    DeceptiveTreeSpec,
    EnvironmentConstructionError,
    EnvironmentModel,
    build_deceptive_tree,
)
from app.evaluation import final_points, summarize_records, trial_metrics
from app.frozen_lake import FrozenLake, FrozenLakeSpec, MapGenerationError, generate_frozen_lake_map
from app.models import (
    CoverageParams,
    DeceptiveTreeParams,
    ExperimentSpec,
    ExperimentSummary,
    FrozenLakeParams,
    PlannerConfig,
    SweepEntry,
    SweepReport,
    TrialRecord,
    Variant,
)
from app.oracle import OptimalJoint, brute_force_optimal_joint

logger = logging.getLogger(__name__)

# Parameter grids searched for each benchmark family
APPENDIX_GRIDS: Dict[str, Dict[str, List[float]]] = {
    "d-chain": {
        "epsilon": [0.5, 1.0, 10.0, 20.0],
        "gamma": [0.7, 0.9, 0.95, 0.99],
        "alpha_init": [0.01, 0.1, 0.5, 1.0],
    },
    "frozen-lake": {
        "epsilon": [0.5, 1.0, 10.0, 100.0],
        "gamma": [0.6, 0.7, 0.9, 0.99],
        "alpha_init": [0.01, 0.1, 1.0, 10.0],
    },
    "coverage": {
        "epsilon": [0.5, 1.0, 10.0, 100.0],
        "gamma": [0.6, 0.7, 0.8, 0.9],
        "alpha_init": [0.01, 0.1, 1.0, 10.0],
    },
}


class ExperimentError(Exception):
    """Raised when an experiment or sweep cannot be set up"""
    pass


def build_environment(descriptor) -> EnvironmentModel:
    """
    Construct the environment named by a descriptor. Generated instances are
    drawn from `instance_seed`, so every call returns the same problem.

    :raises ExperimentError: if the environment cannot be constructed
    """
    try:
        if isinstance(descriptor, DeceptiveTreeParams):
            return build_deceptive_tree(DeceptiveTreeSpec(
                depth=descriptor.depth,
                branching=descriptor.resolved_branching,
                agents=descriptor.agents,
                reward_variant=descriptor.reward_variant,
            ))
        if isinstance(descriptor, FrozenLakeParams):
            if descriptor.map_path:
                spec = FrozenLakeSpec.from_text(
                    Path(descriptor.map_path).read_text(),
                    step_budget=descriptor.step_budget,
                    agents=descriptor.agents,
                )
            else:
                spec = generate_frozen_lake_map(
                    descriptor.width, descriptor.height, descriptor.hole_probability, descriptor.goal_count,
                    np.random.default_rng(descriptor.instance_seed),
                    step_budget=descriptor.step_budget,
                    agents=descriptor.agents,
                    attempt_cap=descriptor.attempt_cap,
                )
            return FrozenLake(spec, descriptor.env_id)
        if isinstance(descriptor, CoverageParams):
            if descriptor.instance_path:
                spec = load_coverage_instance(descriptor.instance_path)
                spec = spec.model_copy(update={"agents": descriptor.agents})
            else:
                spec = synthesize_coverage_instance(
                    descriptor.vertex_count, descriptor.target_count, descriptor.radius,
                    np.random.default_rng(descriptor.instance_seed),
                    budget=descriptor.budget,
                    agents=descriptor.agents,
                )
            return build_graph_coverage(spec, descriptor.env_id)
    except (EnvironmentConstructionError, MapGenerationError, ValidationError, OSError, ValueError) as e:
        logger.error(f"Cannot construct environment: {str(e)}")
        raise ExperimentError(f"Cannot construct environment: {str(e)}")
    raise ExperimentError(f"Unknown environment descriptor: {descriptor!r}")


@dataclass(frozen=True)
class TrialTask:
    config_index: int
    config: PlannerConfig
    environment: object
    seed: int
    cadence: int
    online: bool = False
    optimal: Optional[OptimalJoint] = None


@dataclass
class ExperimentResult:
    env_id: str
    records: List[TrialRecord]
    summary: ExperimentSummary


def _record(env: EnvironmentModel, task: TrialTask, iteration: int, profile, elapsed_ms: int) -> TrialRecord:
    metrics = trial_metrics(env, profile, task.optimal)
    return TrialRecord(
        env_id=env.env_id,
        algorithm=task.config.label,
        seed=task.seed,
        iteration=iteration,
        wallclock_ms=elapsed_ms,
        **metrics,
    )


def run_trial(task: TrialTask) -> List[TrialRecord]:
    """One (planner, seed) pair: a row per cadence point, plus the final iteration if it falls between."""
    env = build_environment(task.environment)
    config = task.config

    if task.online and config.variant is not Variant.CARDENTS:
        outcome = online_replan_loop(env, config, task.seed)
        return [_record(env, task, config.planning_budget, outcome.executed,
                        int(round(outcome.duration_seconds * 1000)))]

    episode = plan_decentralized_episode(env, config, task.seed, cadence=task.cadence)
    records = [_record(env, task, s.iteration, s.profile, s.elapsed_ms) for s in episode.snapshots]
    if config.planning_budget % task.cadence:
        records.append(_record(env, task, config.planning_budget, episode.profile(),
                               int(round(episode.duration_seconds * 1000))))
    return records


def _reference_regret(env: EnvironmentModel, records: List[TrialRecord]) -> List[TrialRecord]:
    """Regret against the best joint score observed anywhere in the experiment."""
    def normalized(score: float) -> float:
        return min(1.0, max(0.0, score / env.utility_bound))

    reference = max(normalized(record.joint_score) for record in records)
    return [
        record.model_copy(update={"simple_regret": max(0.0, reference - normalized(record.joint_score))})
        for record in records
    ]


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """
    Run every planner on every seed and summarize each cadence point.

    Args:
        spec: validated experiment document
        jobs: worker processes; 1 runs the trials in this process

    Raises:
        ExperimentError: if the environment cannot be constructed
        OracleCapExceededError: if exact regret was requested on an instance too large to enumerate
    """
    env = build_environment(spec.environment)
    mode = spec.regret_mode()
    optimal = brute_force_optimal_joint(env) if mode == "exact" else None
    seeds = spec.seed_list()
    tasks = [
        TrialTask(i, config, spec.environment, seed, spec.cadence, spec.online, optimal)
        for i, config in enumerate(spec.planners)
        for seed in seeds
    ]
    logger.info(f"Running experiment {spec.name}: {len(spec.planners)} planners x {len(seeds)} seeds on {env.env_id}")
    start = time.perf_counter()

    results: Dict[Tuple[int, int], List[TrialRecord]] = {}
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                future_to_task = {executor.submit(run_trial, task): task for task in tasks}
                for future in as_completed(future_to_task):
                    task = future_to_task[future]
                    results[(task.config_index, task.seed)] = future.result()
        else:
            for task in tasks:
                results[(task.config_index, task.seed)] = run_trial(task)
    except PlannerError as e:
        logger.error(f"Planner failed in experiment {spec.name}: {str(e)}")
        raise ExperimentError(f"Planner failed: {str(e)}")

    records = [record for key in sorted(results) for record in results[key]]
    reference = None
    if mode == "exact":
        reference = "exact"
    elif mode == "reference" and records:
        records = _reference_regret(env, records)
        reference = "lower-bound"

    logger.info(f"Experiment {spec.name} produced {len(records)} records in {time.perf_counter() - start:.1f}s")
    return ExperimentResult(env_id=env.env_id, records=records, summary=summarize_records(records, reference))


@dataclass
class SweepResult:
    report: SweepReport
    runs: List[ExperimentResult]


def sweep_grid(base: ExperimentSpec, grid: Mapping[str, Sequence[float]], jobs: int = 1) -> SweepResult:
    """
    Run the Cartesian product of `grid` over every planner of `base` and rank the
    combinations by final mean simple regret (when regret is tracked) or final
    mean joint score.

    :raises ExperimentError: on an unknown parameter or an empty dimension
    """
    if not grid:
        raise ExperimentError("Sweep grid has no parameters")
    for name, values in grid.items():
        if name not in PlannerConfig.model_fields:
            raise ExperimentError(f"Unknown planner parameter in grid: {name}")
        if not values:
            raise ExperimentError(f"Grid dimension {name} is empty")

    names = sorted(grid)
    metric = "joint_score" if base.regret_mode() == "none" else "simple_regret"
    runs: List[ExperimentResult] = []
    scored = []
    for index, combination in enumerate(itertools.product(*(grid[name] for name in names))):
        parameters = dict(zip(names, combination))
        try:
            planners = [PlannerConfig.model_validate({**p.model_dump(), **parameters}) for p in base.planners]
        except ValidationError as e:
            raise ExperimentError(f"Invalid grid point {parameters}: {str(e)}")
        result = run_experiment(base.model_copy(update={"planners": planners, "name": f"{base.name}-{index}"}), jobs)
        runs.append(result)

        finals = final_points(result.summary).values()
        if metric == "simple_regret":
            value = float(np.mean([p.simple_regret_mean for p in finals if p.simple_regret_mean is not None]))
        else:
            value = float(np.mean([p.joint_score_mean for p in finals]))
        scored.append((value, index, parameters))
        logger.info(f"Grid point {parameters}: final {metric} {value:.4f}")

    ordered = sorted(scored, key=lambda item: (item[0] if metric == "simple_regret" else -item[0], item[1]))
    entries = [
        SweepEntry(rank=rank, parameters={k: float(v) for k, v in parameters.items()}, metric=metric, value=value)
        for rank, (value, _, parameters) in enumerate(ordered, start=1)
    ]
    return SweepResult(report=SweepReport(experiment=base.name, entries=entries), runs=runs)
