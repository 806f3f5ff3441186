"""
Ground truth for small instances: exhaustive optimum, simple regret, and the
direct-summation form of the discounted statistics.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from app.algorithms import AgentDomain, agent_rng
from app.environments import EnvironmentModel, Profile
from app.search import rollout

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 1_000_000


class OracleCapExceededError(Exception):
    """Raised when the joint sequence space is too large to enumerate"""
    pass


@dataclass(frozen=True)
class OptimalJoint:
    value: float
    raw: float
    witness: Dict[int, Tuple[Any, ...]]


def count_maximal_sequences(env: EnvironmentModel, agent: int, cap: int) -> int:
    """Number of maximal sequences from the agent's start, saturating at cap + 1."""
    memo: Dict[Any, int] = {}

    def count(state) -> int:
        if state not in memo:
            actions = env.actions(agent, state)
            if not actions:
                memo[state] = 1
            else:
                memo[state] = min(cap + 1, sum(count(env.step(agent, state, a)) for a in actions))
        return memo[state]

    return count(env.start_state(agent))


def maximal_sequences(env: EnvironmentModel, agent: int, cap: int) -> List[Tuple[Any, ...]]:
    """Every feasible sequence that runs until the agent has no action left, sorted."""
    found = []
    stack = [(env.start_state(agent), ())]
    while stack:
        state, prefix = stack.pop()
        actions = env.actions(agent, state)
        if not actions:
            found.append(prefix)
            if len(found) > cap:
                raise OracleCapExceededError(
                    f"Agent {agent} alone has more than {cap} sequences; shrink the instance"
                )
            continue
        for action in reversed(actions):
            stack.append((env.step(agent, state, action), prefix + (action,)))
    return sorted(found)


def brute_force_optimal_joint(env: EnvironmentModel, enumeration_cap: int = DEFAULT_ENUMERATION_CAP) -> OptimalJoint:
    """
    Maximize g over the product of the agents' maximal sequences.
    The witness is the lexicographically first maximizer.

    :raises OracleCapExceededError: if the product space exceeds `enumeration_cap`
    """
    size = 1
    for n in range(env.agent_count):
        size = min(enumeration_cap + 1, size * count_maximal_sequences(env, n, enumeration_cap))
    if size > enumeration_cap:
        raise OracleCapExceededError(
            f"Joint space exceeds the cap of {enumeration_cap} profiles; shrink the instance"
        )
    per_agent = [maximal_sequences(env, n, enumeration_cap) for n in range(env.agent_count)]
    logger.info(f"Enumerating {size} joint profiles on {env.env_id}")

    best_raw = -math.inf
    witness: Tuple[Tuple[Any, ...], ...] = ()
    for joint in itertools.product(*per_agent):
        raw = env.utility(dict(enumerate(joint)))
        if raw > best_raw:
            best_raw, witness = raw, joint
    profile = dict(enumerate(witness))
    return OptimalJoint(value=env.normalized_utility(profile), raw=best_raw, witness=profile)


def simple_regret_of(env: EnvironmentModel, recommended: Profile, optimal: OptimalJoint) -> float:
    """Normalized gap to the optimum, clamped at zero."""
    return max(0.0, optimal.value - env.normalized_utility(recommended))


def direct_discount_trace(events: Sequence[Tuple[int, float]], gamma: float, read: int) -> Tuple[float, float]:
    """Discounted count and mean by explicit summation over every visit."""
    if not events:
        return 0.0, 0.0
    weights = np.array([gamma ** (read - t) for t, _ in events])
    rewards = np.array([r for _, r in events])
    count = float(weights.sum())
    return count, float(np.dot(weights, rewards) / count)


def random_walk_profile(env: EnvironmentModel, seed: int) -> Dict[int, Tuple[Any, ...]]:
    """Each agent follows uniformly random feasible actions until it has none."""
    return {
        n: rollout(AgentDomain(env, n), env.start_state(n), agent_rng(seed, n))
        for n in range(env.agent_count)
    }
