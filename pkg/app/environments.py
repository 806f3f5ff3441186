"""
Cooperative planning problems behind one interface.

An environment exposes, per agent, a start state, the feasible actions in a
state and a deterministic transition; jointly it exposes the team utility g
over any subset of agents' action sequences. Environments are immutable once
built and can be shared by every agent and trial.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

Profile = Mapping[int, Sequence[Any]]


class EnvironmentConstructionError(Exception):
    """Raised when an environment cannot be built from its specification"""
    pass


class InfeasibleSequenceError(Exception):
    """Raised when an action sequence is not legal for an agent"""
    pass


class EnvironmentModel(ABC):
    """Abstract cooperative planning problem."""

    def __init__(self, agent_count: int, utility_bound: float, env_id: str):
        if agent_count < 1:
            raise EnvironmentConstructionError("At least one agent is required")
        if utility_bound <= 0:
            raise EnvironmentConstructionError("Utility upper bound must be positive")
        self.agent_count = agent_count
        self.utility_bound = utility_bound
        self.env_id = env_id

    @abstractmethod
    def start_state(self, agent: int) -> Hashable:
        ...

    @abstractmethod
    def actions(self, agent: int, state: Hashable) -> List[Any]:
        """Feasible actions in ascending order; empty once the agent is done."""
        ...

    @abstractmethod
    def step(self, agent: int, state: Hashable, action: Any) -> Hashable:
        ...

    @abstractmethod
    def utility(self, profile: Profile) -> float:
        """Raw joint utility g of the given agents' sequences; g of the empty profile is 0."""
        ...

    def budget(self, agent: int) -> float:
        return float("inf")

    def sequence_cost(self, agent: int, actions: Sequence[Any]) -> float:
        return float(len(actions))

    def goal_count(self) -> int:
        return 0

    def goals_reached(self, profile: Profile) -> int:
        return 0

    def normalized_utility(self, profile: Profile) -> float:
        return min(1.0, max(0.0, self.utility(profile) / self.utility_bound))

    def simulate(self, agent: int, actions: Sequence[Any]) -> Hashable:
        """Replay `actions` from the agent's start state, checking each one is feasible."""
        state = self.start_state(agent)
        for position, action in enumerate(actions):
            if action not in self.actions(agent, state):
                raise InfeasibleSequenceError(
                    f"Action {action!r} at position {position} is not feasible for agent {agent}"
                )
            state = self.step(agent, state, action)
        return state

    def is_feasible(self, agent: int, actions: Sequence[Any]) -> bool:
        try:
            self.simulate(agent, actions)
        except InfeasibleSequenceError:
            return False
        return self.sequence_cost(agent, actions) <= self.budget(agent) + 1e-9

    def advance(self, committed: Profile) -> "CommittedEnvironment":
        """View of this environment after every agent has executed its committed prefix."""
        return CommittedEnvironment(self, committed)


class CommittedEnvironment(EnvironmentModel):
    """
    The remaining planning problem once each agent has executed a prefix.
    Utility counts only what is gained beyond the executed prefixes.
    """

    def __init__(self, base: EnvironmentModel, committed: Profile):
        super().__init__(base.agent_count, base.utility_bound, base.env_id)
        self.base = base
        self.committed = {agent: tuple(committed.get(agent, ())) for agent in range(base.agent_count)}
        self._starts = {agent: base.simulate(agent, prefix) for agent, prefix in self.committed.items()}
        self._realized = base.utility(self.committed)

    def start_state(self, agent: int) -> Hashable:
        return self._starts[agent]

    def actions(self, agent: int, state: Hashable) -> List[Any]:
        return self.base.actions(agent, state)

    def step(self, agent: int, state: Hashable, action: Any) -> Hashable:
        return self.base.step(agent, state, action)

    def joined(self, profile: Profile) -> Dict[int, Tuple[Any, ...]]:
        return {agent: prefix + tuple(profile.get(agent, ())) for agent, prefix in self.committed.items()}

    def utility(self, profile: Profile) -> float:
        return self.base.utility(self.joined(profile)) - self._realized

    def budget(self, agent: int) -> float:
        return self.base.budget(agent) - self.base.sequence_cost(agent, self.committed[agent])

    def sequence_cost(self, agent: int, actions: Sequence[Any]) -> float:
        return self.base.sequence_cost(agent, actions)


# Deceptive trees
@dataclass(frozen=True)
class DeceptiveTreeSpec:
    """
    D-chain of depth D and branching K. Decisions are taken at depths 1..D;
    action 1 progresses, every other action leaves the chain.

    The custom variant grows a subtree under each non-progressing action until
    `term_rules(path, depth)` fires and pays `value(path)` in [0, 1) there.
    """
    depth: int
    branching: int
    agents: int
    reward_variant: str = "standard"
    term_rules: Optional[Callable[[Tuple[int, ...], int], bool]] = None
    value: Optional[Callable[[Tuple[int, ...]], float]] = None
    depth_cap: int = 64
    node_cap: int = 1_000_000


class DeceptiveTree(EnvironmentModel):
    """Every agent searches the same tree; the team is paid once per distinct leaf reached."""

    def __init__(self, spec: DeceptiveTreeSpec, internal: frozenset, leaf_rewards: Dict[Tuple[int, ...], float]):
        ranked = sorted(leaf_rewards.values(), reverse=True)
        bound = sum(ranked[:spec.agents])
        super().__init__(
            spec.agents,
            bound,
            f"dchain-{spec.reward_variant}-D{spec.depth}-K{spec.branching}-N{spec.agents}",
        )
        self.spec = spec
        self.internal = internal
        self.leaf_rewards = leaf_rewards
        self._action_list = list(range(1, spec.branching + 1))

    def start_state(self, agent: int) -> Tuple[int, ...]:
        return ()

    def actions(self, agent: int, state: Tuple[int, ...]) -> List[int]:
        return list(self._action_list) if state in self.internal else []

    def step(self, agent: int, state: Tuple[int, ...], action: int) -> Tuple[int, ...]:
        return state + (action,)

    def utility(self, profile: Profile) -> float:
        return joint_leaf_utility(self, profile.values())

    @property
    def optimal_path(self) -> Tuple[int, ...]:
        return (1,) * self.spec.depth


def _leaf_rule(spec: DeceptiveTreeSpec):
    depth = spec.depth
    if spec.reward_variant == "standard":
        return (lambda path, d: True), (lambda path: (depth - len(path)) / depth)
    if spec.reward_variant == "modified":
        return (lambda path, d: True), (lambda path: (depth - len(path) + 1) / (2 * depth))
    if spec.reward_variant == "custom":
        if spec.term_rules is None or spec.value is None:
            raise EnvironmentConstructionError("Custom variant needs term_rules and value")
        return spec.term_rules, spec.value
    raise EnvironmentConstructionError(f"Unknown reward variant: {spec.reward_variant}")


def build_deceptive_tree(spec: DeceptiveTreeSpec) -> DeceptiveTree:
    """
    Materialize the main chain and the subtrees hanging off it.

    :raises EnvironmentConstructionError: on invalid sizes, or when a custom
        subtree has not terminated by the depth cap or exceeds the node cap
    """
    if spec.depth < 1 or spec.branching < 2 or spec.agents < 1:
        raise EnvironmentConstructionError("Deceptive tree needs D >= 1, K >= 2, N >= 1")
    term_rules, value = _leaf_rule(spec)

    internal = set()
    leaf_rewards: Dict[Tuple[int, ...], float] = {}
    for d in range(1, spec.depth + 1):
        path = (1,) * (d - 1)
        internal.add(path)
        if d == spec.depth:
            leaf_rewards[path + (1,)] = 1.0
        for action in range(2, spec.branching + 1):
            child = path + (action,)
            if d == spec.depth:
                leaf_rewards[child] = 0.0
                continue
            # subtree below a non-progressing action
            stack = [child]
            while stack:
                node = stack.pop()
                if term_rules(node, len(node)):
                    reward = float(value(node))
                    if not 0.0 <= reward < 1.0:
                        raise EnvironmentConstructionError(f"Subtree value {reward} at {node} outside [0, 1)")
                    leaf_rewards[node] = reward
                    continue
                if len(node) >= spec.depth_cap:
                    raise EnvironmentConstructionError(
                        f"Subtree rooted at {child} did not terminate by depth {spec.depth_cap}"
                    )
                internal.add(node)
                if len(internal) + len(leaf_rewards) > spec.node_cap:
                    raise EnvironmentConstructionError(f"Deceptive tree exceeds {spec.node_cap} nodes")
                stack.extend(node + (a,) for a in range(spec.branching, 0, -1))

    logger.debug(f"Built deceptive tree with {len(internal)} internal nodes and {len(leaf_rewards)} leaves")
    return DeceptiveTree(spec, frozenset(internal), leaf_rewards)


def joint_leaf_utility(tree: DeceptiveTree, sequences) -> float:
    """Sum of leaf rewards over the distinct leaves reached; partial sequences pay nothing."""
    reached = {tuple(sequence) for sequence in sequences}
    return sum(tree.leaf_rewards.get(leaf, 0.0) for leaf in reached)
