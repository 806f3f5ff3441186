"""
Compressed plan exchange between agents.

Agents never share trees. Each one publishes a CompressedPlan, its top-k
candidate sequences and a probability mass function over them; the others
sample intentions from it when scoring their own rollouts.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.search import SearchTree, top_rollouts

logger = logging.getLogger(__name__)

JointUtility = Callable[[Mapping[int, Sequence[Any]]], float]

PMF_FLOOR = 1e-12


class CompressionError(Exception):
    """Raised when a plan cannot be compressed or recommended"""
    pass


@dataclass(frozen=True)
class ActionSequence:
    agent_id: int
    actions: Tuple[Any, ...]
    cost: float = 0.0


@dataclass(frozen=True)
class CompressedPlan:
    """Candidate set and pmf published by one agent. Immutable once published."""
    agent_id: int
    candidates: Tuple[ActionSequence, ...]
    pmf: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        if not (len(self.candidates) == len(self.pmf) == len(self.values)):
            raise CompressionError("Candidates, pmf and values must align")
        if self.candidates and abs(sum(self.pmf) - 1.0) > 1e-9:
            raise CompressionError(f"pmf sums to {sum(self.pmf)}")


# latest plan of every other agent
PlanTable = Dict[int, CompressedPlan]


def softmax(scores: np.ndarray, temperature: float) -> np.ndarray:
    logits = np.asarray(scores, dtype=float) / temperature
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def plan_temperature(initial: float, round_index: int) -> float:
    """Annealed plan temperature tau_p0 / log(e + round)."""
    return initial / math.log(math.e + round_index)


def compress_tree(
    tree: SearchTree,
    agent_id: int,
    k: int,
    now: int,
    temperature: float,
    previous: Optional[CompressedPlan] = None,
    cost: Optional[Callable[[Tuple[Any, ...]], float]] = None,
) -> CompressedPlan:
    """
    Keep the k best leaf sequences and weight them by a value softmax.

    Candidates that survive from `previous` share the softmax mass that falls on
    them in proportion to their previous probabilities.

    :raises CompressionError: if the tree has no visited leaf yet
    """
    ranked = top_rollouts(tree, k, now)
    if not ranked:
        raise CompressionError("Compression before any rollout")

    values = np.array([value for _, value in ranked])
    pmf = softmax(values, temperature)

    if previous is not None:
        known = {candidate.actions: p for candidate, p in zip(previous.candidates, previous.pmf)}
        survivors = np.array([actions in known for actions, _ in ranked])
        carried = np.array([known.get(actions, 0.0) for actions, _ in ranked])
        if survivors.any() and carried[survivors].sum() > 0:
            pmf[survivors] = pmf[survivors].sum() * carried[survivors] / carried[survivors].sum()
            pmf /= pmf.sum()

    candidates = tuple(
        ActionSequence(agent_id=agent_id, actions=actions, cost=cost(actions) if cost else float(len(actions)))
        for actions, _ in ranked
    )
    return CompressedPlan(agent_id=agent_id, candidates=candidates,
                          pmf=tuple(float(p) for p in pmf), values=tuple(float(v) for v in values))


def sample_joint_actions(table: Mapping[int, CompressedPlan], rng: np.random.Generator) -> Dict[int, ActionSequence]:
    """One candidate per agent in the table, drawn from its pmf, in ascending agent order."""
    joint = {}
    for agent_id in sorted(table):
        plan = table[agent_id]
        if not plan.candidates:
            continue
        index = int(rng.choice(len(plan.candidates), p=np.asarray(plan.pmf)))
        joint[agent_id] = plan.candidates[index]
    return joint


def marginal_contribution(
    utility: JointUtility,
    own: ActionSequence,
    others: Mapping[int, ActionSequence],
) -> float:
    """g(own with others) - g(others) on a normalized utility, clamped to [0, 1]."""
    context = {agent_id: sequence.actions for agent_id, sequence in others.items()}
    with_own = dict(context)
    with_own[own.agent_id] = own.actions
    return min(1.0, max(0.0, utility(with_own) - utility(context)))


def update_plan_distribution(
    plan: CompressedPlan,
    table: Mapping[int, CompressedPlan],
    utility: JointUtility,
    sample_count: int,
    temperature: float,
    rng: np.random.Generator,
) -> CompressedPlan:
    """
    Re-weight own candidates by their expected joint utility against the other
    agents' published plans: p'(a) is proportional to p(a) * exp(E[g | a] / temperature),
    so mass accumulates across rounds. The same joint samples score every candidate.
    """
    if not plan.candidates:
        raise CompressionError("Cannot update an empty plan")
    samples = [sample_joint_actions(table, rng) for _ in range(sample_count)]
    estimates = np.zeros(len(plan.candidates))
    for i, candidate in enumerate(plan.candidates):
        total = 0.0
        for others in samples:
            joint = {agent_id: sequence.actions for agent_id, sequence in others.items()}
            joint[plan.agent_id] = candidate.actions
            total += utility(joint)
        estimates[i] = total / sample_count
    prior = np.log(np.maximum(np.asarray(plan.pmf, dtype=float), PMF_FLOOR))
    pmf = softmax(prior + estimates / temperature, 1.0)
    # keep every candidate recoverable
    pmf = np.maximum(pmf, PMF_FLOOR)
    pmf /= pmf.sum()
    return CompressedPlan(agent_id=plan.agent_id, candidates=plan.candidates,
                          pmf=tuple(float(p) for p in pmf), values=plan.values)


def recommend_plan(plan: CompressedPlan) -> ActionSequence:
    """Most probable candidate; ties go to the higher leaf value, then the lexicographically smaller sequence."""
    if not plan.candidates:
        raise CompressionError("Cannot recommend from an empty plan")
    best = min(
        range(len(plan.candidates)),
        key=lambda i: (-plan.pmf[i], -plan.values[i], plan.candidates[i].actions),
    )
    return plan.candidates[best]
