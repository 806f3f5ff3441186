"""
Per-agent search tree.

Node statistics are discounted lazily: every node keeps the iteration of its
last write and the stored masses are decayed on read, which is equivalent to
re-weighting every node at every iteration.
"""
import heapq
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Hashable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from app.models import ScheduleKind

logger = logging.getLogger(__name__)

ROOT = 0
ALPHA_FLOOR = 1e-6


class SearchError(Exception):
    """Base exception for search tree operations"""
    pass


class Selection(str, Enum):
    BOLTZMANN = "boltzmann"
    DUCT = "d-uct"


@dataclass(frozen=True)
class ScheduleSpec:
    """A decaying coefficient evaluated at an effective visit count m."""
    kind: ScheduleKind
    initial: float = 1.0
    gamma: float = 0.9

    def __call__(self, m: float) -> float:
        if self.kind is ScheduleKind.ZERO:
            return 0.0
        if self.kind is ScheduleKind.INVERSE_LOG:
            return self.initial / math.log(math.e + m)
        bound = 1.0 / (1.0 - self.gamma)
        if m >= bound:
            return 0.0
        return self.initial * math.exp(-m / (bound - m))


@dataclass(frozen=True)
class PolicyParams:
    alpha: ScheduleSpec
    beta: ScheduleSpec
    epsilon: float


@dataclass(slots=True)
class NodeStats:
    stored_count: float = 0.0
    stored_reward_sum: float = 0.0
    last_update: int = 0
    entropy: float = 0.0


@dataclass(slots=True)
class SearchNode:
    parent: Optional[int]
    action: Any
    depth: int
    state: Hashable
    actions: Tuple[Any, ...]
    children: List[int] = field(default_factory=list)
    stats: NodeStats = field(default_factory=NodeStats)
    best_reward: float = -1.0
    completion: Tuple[Any, ...] = ()

    @property
    def terminal(self) -> bool:
        return not self.actions

    @property
    def fully_expanded(self) -> bool:
        return len(self.children) == len(self.actions)


class TreeDomain(Protocol):
    """What a tree needs to know about the problem it searches."""

    def root_state(self) -> Hashable: ...

    def actions(self, state: Hashable) -> Sequence[Any]: ...

    def step(self, state: Hashable, action: Any) -> Hashable: ...


def decayed_stats_at(stats: NodeStats, gamma: float, now: int) -> Tuple[float, float]:
    """
    Read a node's effective (count, value) at iteration `now`.

    :param stats: stored node statistics
    :param gamma: discount factor
    :param now: current planning iteration, never earlier than the last write
    :return: decayed count and discounted mean reward
    :raises SearchError: if the clock went backwards
    """
    elapsed = now - stats.last_update
    if elapsed < 0:
        raise SearchError(f"Read at iteration {now} precedes last update {stats.last_update}")
    count = stats.stored_count * gamma ** elapsed
    value = stats.stored_reward_sum / stats.stored_count if stats.stored_count > 0 else 0.0
    return count, value


def record_visit(stats: NodeStats, reward: float, gamma: float, now: int) -> NodeStats:
    """Decay both stored masses to `now`, then add one visit with the given reward."""
    if not 0.0 <= reward <= 1.0:
        raise SearchError(f"Reward {reward} outside [0, 1]")
    elapsed = now - stats.last_update
    if elapsed < 0:
        raise SearchError(f"Write at iteration {now} precedes last update {stats.last_update}")
    decay = gamma ** elapsed
    stats.stored_count = stats.stored_count * decay + 1.0
    stats.stored_reward_sum = stats.stored_reward_sum * decay + reward
    stats.last_update = now
    return stats


class SearchTree:
    """Node arena for one agent's (or the centralized planner's) tree."""

    def __init__(self, domain: TreeDomain, gamma: float):
        self.domain = domain
        self.gamma = gamma
        state = domain.root_state()
        self.nodes: List[SearchNode] = [
            SearchNode(parent=None, action=None, depth=0, state=state, actions=tuple(domain.actions(state)))
        ]
        self._leaves = {ROOT}

    @property
    def root(self) -> int:
        return ROOT

    def __len__(self) -> int:
        return len(self.nodes)

    def expand(self, node_id: int) -> int:
        """Append the child for the lowest-indexed action that has no child yet."""
        node = self.nodes[node_id]
        if node.fully_expanded:
            raise SearchError(f"Node {node_id} has no unexpanded action")
        action = node.actions[len(node.children)]
        state = self.domain.step(node.state, action)
        child_id = len(self.nodes)
        self.nodes.append(SearchNode(
            parent=node_id,
            action=action,
            depth=node.depth + 1,
            state=state,
            actions=tuple(self.domain.actions(state)),
        ))
        node.children.append(child_id)
        self._leaves.discard(node_id)
        self._leaves.add(child_id)
        return child_id

    def path_actions(self, node_id: int) -> Tuple[Any, ...]:
        actions = []
        node = self.nodes[node_id]
        while node.parent is not None:
            actions.append(node.action)
            node = self.nodes[node.parent]
        return tuple(reversed(actions))

    def leaves(self) -> List[int]:
        return sorted(self._leaves)


def uniform_share(epsilon: float, parent_count: float) -> float:
    """Mixing weight lambda = min(1, epsilon / log(e + N)) of the uniform component."""
    return min(1.0, epsilon / math.log(math.e + parent_count))


def boltzmann_policy(tree: SearchTree, parent: int, params: PolicyParams, now: int) -> np.ndarray:
    """
    Mixed Boltzmann policy over the expanded children of `parent`.

    The softmax temperature and the entropy weight are both evaluated at the
    parent's effective count; a decaying uniform share keeps every child reachable.
    """
    node = tree.nodes[parent]
    if not node.children:
        raise SearchError(f"Node {parent} has no expanded child")
    parent_count, _ = decayed_stats_at(node.stats, tree.gamma, now)

    values = np.empty(len(node.children))
    entropies = np.empty(len(node.children))
    for i, child_id in enumerate(node.children):
        child = tree.nodes[child_id]
        _, values[i] = decayed_stats_at(child.stats, tree.gamma, now)
        entropies[i] = child.stats.entropy

    share = uniform_share(params.epsilon, parent_count)
    temperature = max(params.alpha(parent_count), ALPHA_FLOOR)
    logits = (values + params.beta(parent_count) * entropies) / temperature
    logits -= logits.max()
    rho = np.exp(logits)
    rho /= rho.sum()
    return (1.0 - share) * rho + share / len(node.children)


def duct_score(tree: SearchTree, child: int, parent: int, epsilon: float, now: int) -> float:
    """Discounted UCT score; children never visited score +inf."""
    child_count, value = decayed_stats_at(tree.nodes[child].stats, tree.gamma, now)
    if child_count <= 0:
        return math.inf
    parent_count, _ = decayed_stats_at(tree.nodes[parent].stats, tree.gamma, now)
    # log is clamped at 0 once a long-unvisited parent decays below one visit
    exploration = max(math.log(parent_count), 0.0) if parent_count > 0 else 0.0
    return value + math.sqrt(epsilon * exploration / child_count)


def select_and_expand(
    tree: SearchTree,
    selection: Selection,
    params: PolicyParams,
    rng: np.random.Generator,
    now: int,
) -> Tuple[int, List[int]]:
    """
    Descend from the root until a node with an unexpanded action (which is then
    expanded) or a terminal node is reached.

    Returns:
        The stop node and every node traversed from the root, stop node included.
    """
    node_id = ROOT
    path = [ROOT]
    while True:
        node = tree.nodes[node_id]
        if node.terminal:
            return node_id, path
        if not node.fully_expanded:
            child_id = tree.expand(node_id)
            path.append(child_id)
            return child_id, path

        if selection is Selection.BOLTZMANN:
            probabilities = boltzmann_policy(tree, node_id, params, now)
            index = int(rng.choice(len(node.children), p=probabilities))
        else:
            scores = [duct_score(tree, c, node_id, params.epsilon, now) for c in node.children]
            index = max(range(len(scores)), key=lambda i: (scores[i], -i))
        node_id = node.children[index]
        path.append(node_id)


def rollout(domain: TreeDomain, state: Hashable, rng: np.random.Generator) -> Tuple[Any, ...]:
    """Uniform-random feasible actions until the domain offers none."""
    tail = []
    actions = domain.actions(state)
    while actions:
        action = actions[int(rng.integers(len(actions)))]
        tail.append(action)
        state = domain.step(state, action)
        actions = domain.actions(state)
    return tuple(tail)


def backpropagate(
    tree: SearchTree,
    path: Sequence[int],
    reward: float,
    now: int,
    completion: Optional[Sequence[Any]] = None,
) -> None:
    """Discounted count/value update along `path`; no entropy bookkeeping."""
    for node_id in path:
        record_visit(tree.nodes[node_id].stats, reward, tree.gamma, now)
    leaf = tree.nodes[path[-1]]
    if completion is not None and not leaf.children and reward >= leaf.best_reward:
        leaf.best_reward = reward
        leaf.completion = tuple(completion)


def backpropagate_with_entropy(
    tree: SearchTree,
    path: Sequence[int],
    reward: float,
    params: PolicyParams,
    now: int,
    completion: Optional[Sequence[Any]] = None,
) -> None:
    """
    Discounted update followed by a bottom-up entropy backup.

    Each internal node on the path gets H = Shannon(pi) + sum_j pi(j) * H_j,
    with pi recomputed from the post-update statistics. Leaves keep H = 0.
    """
    backpropagate(tree, path, reward, now, completion)
    for node_id in reversed(path):
        node = tree.nodes[node_id]
        if not node.children:
            continue
        pi = boltzmann_policy(tree, node_id, params, now)
        child_entropy = np.fromiter(
            (tree.nodes[c].stats.entropy for c in node.children), dtype=float, count=len(node.children)
        )
        node.stats.entropy = float(-np.dot(pi, np.log(pi)) + np.dot(pi, child_entropy))


def top_rollouts(tree: SearchTree, k: int, now: int) -> List[Tuple[Tuple[Any, ...], float]]:
    """
    Up to k distinct leaf sequences ranked by discounted value, then effective
    count, then lexicographic order. A leaf's sequence is its root path extended
    by the best rollout completion recorded there.
    """
    if k < 1:
        raise SearchError("k must be positive")
    best = {}
    for leaf_id in tree.leaves():
        node = tree.nodes[leaf_id]
        if node.stats.stored_count <= 0:
            continue
        count, value = decayed_stats_at(node.stats, tree.gamma, now)
        sequence = node.completion or tree.path_actions(leaf_id)
        if sequence not in best or (value, count) > best[sequence][:2]:
            best[sequence] = (value, count)
    ranked = heapq.nsmallest(
        k,
        ((value, count, sequence) for sequence, (value, count) in best.items()),
        key=lambda item: (-item[0], -item[1], item[2]),
    )
    return [(sequence, value) for value, _, sequence in ranked]
