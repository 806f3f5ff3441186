"""
Planner assembly.

`plan_decentralized_episode` runs one search tree per agent in lockstep rounds:
every round each agent runs a block of select/expand/rollout/evaluate/backup
iterations against the plans the others published at the previous round, then
compresses its tree, re-weights its candidates and publishes. The variants
differ only in how the schedules, selection rule, reward and communication are
resolved by `apply_variant_schedules`.
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.coordination import (
    ActionSequence,
    CompressedPlan,
    PlanTable,
    compress_tree,
    marginal_contribution,
    plan_temperature,
    recommend_plan,
    sample_joint_actions,
    update_plan_distribution,
)
from app.environments import EnvironmentModel
from app.models import PlannerConfig, ScheduleKind, Variant
from app.search import (
    ROOT,
    PolicyParams,
    ScheduleSpec,
    SearchTree,
    Selection,
    backpropagate,
    backpropagate_with_entropy,
    decayed_stats_at,
    rollout,
    select_and_expand,
)

logger = logging.getLogger(__name__)

# joint-tree edge for an agent that has nothing left to do
PASS = None


class PlannerError(Exception):
    """Raised when a planner cannot be configured or started"""
    pass


class RewardMode(str, Enum):
    MARGINAL = "marginal"
    GLOBAL = "global"


@dataclass(frozen=True)
class ResolvedPlanner:
    variant: Variant
    selection: Selection
    policy: PolicyParams
    reward_mode: RewardMode
    communicate: bool
    entropy: bool
    centralized: bool


def apply_variant_schedules(config: PlannerConfig) -> ResolvedPlanner:
    """
    Resolve a config into schedules and evaluation mode.

    CB: inverse-log alpha and beta, marginal reward, full coordination.
    DEC: D-UCT selection, no entropy. GU: reward is the global utility.
    NE: beta is zero. FA: alpha decays to zero at 1/(1 - gamma).
    INDEPENDENT: nothing is ever read from the other agents.
    CARDENTS: one centralized tree.
    """
    variant = config.variant
    alpha = ScheduleSpec(ScheduleKind.INVERSE_LOG, config.alpha_init, config.gamma)
    beta = ScheduleSpec(ScheduleKind.INVERSE_LOG, config.beta_init, config.gamma)
    if variant is Variant.NE:
        beta = ScheduleSpec(ScheduleKind.ZERO, 0.0, config.gamma)
    if variant is Variant.FA:
        if 1.0 / (1.0 - config.gamma) <= 1.0:
            raise PlannerError(f"Fast-decay schedule needs 1/(1 - gamma) > 1, got gamma={config.gamma}")
        alpha = ScheduleSpec(ScheduleKind.FAST_DECAY, config.alpha_init, config.gamma)

    return ResolvedPlanner(
        variant=variant,
        selection=Selection.DUCT if variant is Variant.DEC else Selection.BOLTZMANN,
        policy=PolicyParams(alpha=alpha, beta=beta, epsilon=config.epsilon),
        reward_mode=RewardMode.GLOBAL if variant is Variant.GU else RewardMode.MARGINAL,
        communicate=variant is not Variant.INDEPENDENT,
        entropy=variant is not Variant.DEC,
        centralized=variant is Variant.CARDENTS,
    )


# Tuned hyperparameters per benchmark; ablations inherit the CB row.
PRESETS: Dict[str, Dict[Variant, Dict[str, float]]] = {
    "frozen-lake": {
        Variant.DEC: {"epsilon": 100.0, "gamma": 0.99},
        Variant.CB: {"epsilon": 0.5, "gamma": 0.9, "alpha_init": 1.0},
        Variant.FA: {"epsilon": 0.5, "gamma": 0.9, "alpha_init": 1.0},
        Variant.CARDENTS: {"epsilon": 0.5, "gamma": 0.99, "alpha_init": 1.0},
    },
    "coverage": {
        Variant.DEC: {"epsilon": 100.0, "gamma": 0.6},
        Variant.CB: {"epsilon": 0.5, "gamma": 0.8, "alpha_init": 0.01},
        Variant.CARDENTS: {"epsilon": 0.5, "gamma": 0.99, "alpha_init": 10.0},
    },
    "d-chain": {
        Variant.DEC: {"epsilon": 0.5, "gamma": 0.7},
        Variant.CB: {"epsilon": 0.5, "gamma": 0.9, "alpha_init": 1.0},
    },
}


def preset_config(benchmark: str, variant: Variant, **overrides) -> PlannerConfig:
    if benchmark not in PRESETS:
        raise PlannerError(f"Unknown preset family: {benchmark}")
    table = PRESETS[benchmark]
    values = dict(table.get(variant, table[Variant.CB]))
    values.update(overrides)
    return PlannerConfig(variant=variant, **values)


def agent_rng(seed: int, agent_id: int, stream: int = 0) -> np.random.Generator:
    """Independent random stream per (trial seed, agent, replanning cycle)."""
    return np.random.default_rng([seed, agent_id, stream])


class AgentDomain:
    """One agent's view of the environment, as seen by its own tree."""

    def __init__(self, env: EnvironmentModel, agent_id: int):
        self.env = env
        self.agent_id = agent_id

    def root_state(self) -> Hashable:
        return self.env.start_state(self.agent_id)

    def actions(self, state: Hashable) -> List[Any]:
        return self.env.actions(self.agent_id, state)

    def step(self, state: Hashable, action: Any) -> Hashable:
        return self.env.step(self.agent_id, state, action)


class JointDomain:
    """Centralized tree: the node at depth d belongs to agent d mod N."""

    def __init__(self, env: EnvironmentModel):
        self.env = env
        self.agent_count = env.agent_count

    def root_state(self) -> Tuple[int, Tuple[Hashable, ...]]:
        return (0, tuple(self.env.start_state(n) for n in range(self.agent_count)))

    def actions(self, state) -> List[Any]:
        turn, states = state
        if not any(self.env.actions(n, s) for n, s in enumerate(states)):
            return []
        return self.env.actions(turn, states[turn]) or [PASS]

    def step(self, state, action):
        turn, states = state
        if action is not PASS:
            states = states[:turn] + (self.env.step(turn, states[turn], action),) + states[turn + 1:]
        return ((turn + 1) % self.agent_count, states)


def split_joint(joint_actions: Sequence[Any], agent_count: int) -> Dict[int, Tuple[Any, ...]]:
    """Per-agent sequences from an interleaved joint sequence, PASS edges dropped."""
    return {
        n: tuple(a for a in joint_actions[n::agent_count] if a is not PASS)
        for n in range(agent_count)
    }


@dataclass
class Snapshot:
    iteration: int
    profile: Dict[int, Tuple[Any, ...]]
    elapsed_ms: int


@dataclass
class EpisodeResult:
    """
    Outcome of one planning episode. `trace` has one entry per planning
    iteration: the iteration index and the reward each planning agent backed up,
    in ascending agent order (a single entry for the centralized tree).
    """
    recommended: Dict[int, ActionSequence]
    trace: List[Tuple[int, Tuple[float, ...]]] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)
    duration_seconds: float = 0.0

    def profile(self) -> Dict[int, Tuple[Any, ...]]:
        return {agent: sequence.actions for agent, sequence in self.recommended.items()}


class AgentPlanner:
    """One agent's tree, clock, random stream and latest published plan."""

    def __init__(self, env: EnvironmentModel, agent_id: int, config: PlannerConfig,
                 resolved: ResolvedPlanner, rng: np.random.Generator):
        self.env = env
        self.agent_id = agent_id
        self.config = config
        self.resolved = resolved
        self.rng = rng
        self.tree = SearchTree(AgentDomain(env, agent_id), config.gamma)
        if self.tree.nodes[ROOT].terminal:
            raise PlannerError(f"Agent {agent_id} has no feasible action at its start state")
        self.now = 0
        self.rounds = 0
        self.last_compression: Optional[int] = None
        self.plan: Optional[CompressedPlan] = None

    def iterate(self, others: PlanTable) -> float:
        """One select/expand, rollout, evaluate, backup cycle. Returns the reward backed up."""
        leaf, path = select_and_expand(self.tree, self.resolved.selection, self.resolved.policy, self.rng, self.now)
        actions = self.tree.path_actions(leaf) + rollout(self.tree.domain, self.tree.nodes[leaf].state, self.rng)
        reward = self.evaluate(ActionSequence(self.agent_id, actions), others)
        if self.resolved.entropy:
            backpropagate_with_entropy(self.tree, path, reward, self.resolved.policy, self.now, completion=actions)
        else:
            backpropagate(self.tree, path, reward, self.now, completion=actions)
        self.now += 1
        return reward

    def evaluate(self, own: ActionSequence, others: PlanTable) -> float:
        sampled = sample_joint_actions(others, self.rng)
        if self.resolved.reward_mode is RewardMode.GLOBAL:
            joint = {agent: sequence.actions for agent, sequence in sampled.items()}
            joint[self.agent_id] = own.actions
            return self.env.normalized_utility(joint)
        return marginal_contribution(self.env.normalized_utility, own, sampled)

    def publish(self, others: PlanTable) -> CompressedPlan:
        """Compress when due, re-weight the candidates against `others`, and return the new plan."""
        temperature = plan_temperature(self.config.plan_temperature, self.rounds)
        due = self.last_compression is None or self.now - self.last_compression >= self.config.communication_period
        if self.plan is None or due:
            self.plan = compress_tree(
                self.tree, self.agent_id, self.config.compression_size, self.now, temperature,
                previous=self.plan,
                cost=lambda actions: self.env.sequence_cost(self.agent_id, actions),
            )
            self.last_compression = self.now
        self.plan = update_plan_distribution(
            self.plan, others, self.env.normalized_utility, self.config.sample_count, temperature, self.rng
        )
        self.rounds += 1
        return self.plan

    def recommendation(self) -> Tuple[Any, ...]:
        return recommend_plan(self.plan).actions if self.plan else ()


def _elapsed_ms(start: float) -> int:
    return int(round((time.perf_counter() - start) * 1000))


def plan_decentralized_episode(
    env: EnvironmentModel,
    config: PlannerConfig,
    seed: int,
    cadence: Optional[int] = None,
    agents: Optional[Iterable[int]] = None,
    stream: int = 0,
) -> EpisodeResult:
    """
    Run every agent for `config.planning_budget` iterations and return each one's recommendation.

    Args:
        env: the cooperative planning problem
        config: planner hyperparameters; CAR-DENTS configs are routed to `plan_car_dents`
        seed: trial seed; each agent draws from its own stream derived from it
        cadence: if set, snapshot the latest published recommendations every `cadence` iterations
        agents: subset of agents that plan (the others keep whatever they already executed)
        stream: extra stream index, distinct per replanning cycle
    """
    resolved = apply_variant_schedules(config)
    if resolved.centralized:
        return plan_car_dents(env, config, seed, cadence=cadence, stream=stream)

    start = time.perf_counter()
    agent_ids = sorted(agents) if agents is not None else list(range(env.agent_count))
    planners = [AgentPlanner(env, n, config, resolved, agent_rng(seed, n, stream)) for n in agent_ids]
    result = EpisodeResult(recommended={})
    logger.debug(f"Planning {config.label} on {env.env_id} with {len(planners)} agents, seed {seed}")

    def snapshot(iteration: int) -> None:
        result.snapshots.append(Snapshot(
            iteration=iteration,
            profile={p.agent_id: p.recommendation() for p in planners},
            elapsed_ms=_elapsed_ms(start),
        ))

    table: PlanTable = {}
    t = 0
    while t < config.planning_budget:
        block_end = t + min(config.iterations_per_round, config.planning_budget - t)
        visible = table if resolved.communicate else {}
        views = {p.agent_id: {a: plan for a, plan in visible.items() if a != p.agent_id} for p in planners}
        while t < block_end:
            rewards = tuple(planner.iterate(views[planner.agent_id]) for planner in planners)
            result.trace.append((t, rewards))
            t += 1
            # a cadence point on the block boundary waits for this round's plans
            if cadence and t % cadence == 0 and t < block_end:
                snapshot(t)
        table = {p.agent_id: p.publish(views[p.agent_id]) for p in planners}
        if cadence and t % cadence == 0:
            snapshot(t)
        logger.debug(f"Communication round at iteration {t}")

    result.recommended = {p.agent_id: recommend_plan(p.plan) for p in planners}
    result.duration_seconds = time.perf_counter() - start
    return result


def _greedy_joint(tree: SearchTree, now: int) -> Tuple[Any, ...]:
    """Descend by highest discounted value (then count, then lowest action index)."""
    node_id = ROOT
    while tree.nodes[node_id].children:
        children = tree.nodes[node_id].children

        def key(i):
            count, value = decayed_stats_at(tree.nodes[children[i]].stats, tree.gamma, now)
            return (value, count, -i)

        node_id = children[max(range(len(children)), key=key)]
    return tree.nodes[node_id].completion or tree.path_actions(node_id)


def plan_car_dents(
    env: EnvironmentModel,
    config: PlannerConfig,
    seed: int,
    cadence: Optional[int] = None,
    stream: int = 0,
) -> EpisodeResult:
    """
    Centralized planner: one tree over the interleaved joint action sequence,
    Boltzmann selection with entropy backup, reward = normalized global utility.
    """
    resolved = apply_variant_schedules(config.model_copy(update={"variant": Variant.CB}))
    start = time.perf_counter()
    domain = JointDomain(env)
    tree = SearchTree(domain, config.gamma)
    if tree.nodes[ROOT].terminal:
        raise PlannerError("No agent has a feasible action at its start state")
    rng = agent_rng(seed, 0, stream)
    result = EpisodeResult(recommended={})
    logger.debug(f"Planning centralized {config.label} on {env.env_id}, seed {seed}")

    for now in range(config.planning_budget):
        leaf, path = select_and_expand(tree, Selection.BOLTZMANN, resolved.policy, rng, now)
        joint_actions = tree.path_actions(leaf) + rollout(domain, tree.nodes[leaf].state, rng)
        reward = env.normalized_utility(split_joint(joint_actions, env.agent_count))
        backpropagate_with_entropy(tree, path, reward, resolved.policy, now, completion=joint_actions)
        result.trace.append((now, (reward,)))
        if cadence and (now + 1) % cadence == 0:
            result.snapshots.append(Snapshot(
                iteration=now + 1,
                profile=split_joint(_greedy_joint(tree, now), env.agent_count),
                elapsed_ms=_elapsed_ms(start),
            ))

    profile = split_joint(_greedy_joint(tree, config.planning_budget - 1), env.agent_count)
    result.recommended = {
        n: ActionSequence(n, actions, env.sequence_cost(n, actions)) for n, actions in profile.items()
    }
    result.duration_seconds = time.perf_counter() - start
    return result


@dataclass
class OnlineResult:
    executed: Dict[int, Tuple[Any, ...]]
    utility: float
    normalized_utility: float
    cycles: int
    duration_seconds: float


def online_replan_loop(env: EnvironmentModel, config: PlannerConfig, seed: int) -> OnlineResult:
    """
    Plan, execute every agent's first action, and replan from the new states
    until no agent can move. Trees are rebuilt from scratch every cycle.

    :raises PlannerError: if an executed walk leaves the feasible set or the budget
    """
    start = time.perf_counter()
    executed: Dict[int, Tuple[Any, ...]] = {n: () for n in range(env.agent_count)}
    cycles = 0
    while True:
        view = env.advance(executed)
        active = [n for n in range(env.agent_count) if view.actions(n, view.start_state(n))]
        if not active:
            break
        episode = plan_decentralized_episode(view, config, seed, agents=active, stream=cycles + 1)
        for n in active:
            executed[n] = executed[n] + (episode.recommended[n].actions[0],)
            if not env.is_feasible(n, executed[n]):
                raise PlannerError(f"Agent {n} executed an infeasible walk: {executed[n]}")
        cycles += 1
    utility = env.utility(executed)
    logger.info(f"Online replanning on {env.env_id} finished after {cycles} cycles, utility {utility:.4f}")
    return OnlineResult(
        executed=executed,
        utility=utility,
        normalized_utility=env.normalized_utility(executed),
        cycles=cycles,
        duration_seconds=time.perf_counter() - start,
    )
