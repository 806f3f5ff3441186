import numpy as np
import pytest

import app.coordination as coordination
from app.coordination import (
    ActionSequence,
    CompressedPlan,
    CompressionError,
    compress_tree,
    marginal_contribution,
    plan_temperature,
    recommend_plan,
    sample_joint_actions,
    softmax,
    update_plan_distribution,
)
from app.search import SearchTree


class LineDomain:
    def root_state(self):
        return ()

    def actions(self, state):
        return [0, 1] if len(state) < 3 else []

    def step(self, state, action):
        return state + (action,)


def plan(agent_id, sequences, pmf, values=None):
    return CompressedPlan(
        agent_id=agent_id,
        candidates=tuple(ActionSequence(agent_id, tuple(s)) for s in sequences),
        pmf=tuple(pmf),
        values=tuple(values if values is not None else [0.0] * len(sequences)),
    )


def distinct_utility(profile):
    """Half a point per distinct sequence, capped at 1."""
    return min(1.0, 0.5 * len({tuple(s) for s in profile.values()}))


def test_softmax_example():
    assert softmax(np.array([1.0, 0.0]), 1.0) == pytest.approx([0.731, 0.269], abs=1e-3)
    assert softmax(np.array([3.0, 3.0, 3.0]), 0.1) == pytest.approx([1 / 3] * 3)


def test_plan_temperature_anneals():
    assert plan_temperature(1.0, 0) == pytest.approx(1.0)
    assert plan_temperature(1.0, 10) < plan_temperature(1.0, 1) < 1.0


def test_plan_pmf_must_sum_to_one():
    with pytest.raises(CompressionError):
        plan(0, [(0,), (1,)], [0.5, 0.6])


def test_compression_before_any_rollout_is_rejected():
    with pytest.raises(CompressionError):
        compress_tree(SearchTree(LineDomain(), 0.9), 0, 5, 0, 1.0)


def test_compression_keeps_surviving_mass(monkeypatch):
    previous = plan(0, [(0,), (1,)], [0.9, 0.1])
    monkeypatch.setattr(coordination, "top_rollouts", lambda tree, k, now: [((0,), 0.5), ((1,), 0.5), ((2,), 0.5)])
    compressed = compress_tree(None, 0, 3, 0, 1.0, previous=previous)
    assert sum(compressed.pmf) == pytest.approx(1.0)
    assert compressed.pmf[2] == pytest.approx(1 / 3)
    assert compressed.pmf[0] / compressed.pmf[1] == pytest.approx(9.0)


def test_compression_without_survivors_is_a_plain_softmax(monkeypatch):
    previous = plan(0, [(5,)], [1.0])
    monkeypatch.setattr(coordination, "top_rollouts", lambda tree, k, now: [((0,), 1.0), ((1,), 0.0)])
    compressed = compress_tree(None, 0, 2, 0, 1.0, previous=previous, cost=lambda actions: 7.0)
    assert compressed.pmf == pytest.approx([0.731, 0.269], abs=1e-3)
    assert [c.cost for c in compressed.candidates] == [7.0, 7.0]


def test_sample_joint_actions_follows_pmf():
    table = {2: plan(2, [(1,), (2,)], [0.0, 1.0]), 0: plan(0, [(3,)], [1.0])}
    joint = sample_joint_actions(table, np.random.default_rng(0))
    assert list(joint) == [0, 2]
    assert joint[2].actions == (2,)
    assert sample_joint_actions({}, np.random.default_rng(0)) == {}


def test_marginal_contribution():
    own = ActionSequence(0, (1,))
    assert marginal_contribution(distinct_utility, own, {}) == pytest.approx(0.5)
    assert marginal_contribution(distinct_utility, own, {1: ActionSequence(1, (1,))}) == 0.0
    assert marginal_contribution(distinct_utility, own, {1: ActionSequence(1, (2,))}) == pytest.approx(0.5)


def test_marginal_contribution_is_clamped():
    def hurtful(profile):
        return 0.2 if 0 in profile else 0.8
    assert marginal_contribution(hurtful, ActionSequence(0, (1,)), {1: ActionSequence(1, (1,))}) == 0.0


def test_update_prefers_complementary_candidates():
    own = plan(0, [(1,), (2,)], [0.5, 0.5])
    others = {1: plan(1, [(1,)], [1.0])}
    updated = update_plan_distribution(own, others, distinct_utility, 5, 1.0, np.random.default_rng(0))
    # (2,) complements the other agent: estimates 1.0 versus 0.5
    assert updated.pmf == pytest.approx(list(softmax(np.array([0.5, 1.0]), 1.0)))
    assert updated.candidates == own.candidates


def test_update_against_nobody_uses_own_utility():
    own = plan(0, [(1,), (2,)], [0.5, 0.5])

    def utility(profile):
        return 1.0 if profile.get(0) == (1,) else 0.0

    updated = update_plan_distribution(own, {}, utility, 3, 1.0, np.random.default_rng(0))
    assert updated.pmf == pytest.approx([0.731, 0.269], abs=1e-3)


def test_recommend_plan_ties():
    assert recommend_plan(plan(0, [(2,), (1,)], [0.5, 0.5], [0.3, 0.7])).actions == (1,)
    assert recommend_plan(plan(0, [(2,), (1,)], [0.5, 0.5], [0.7, 0.7])).actions == (1,)
    assert recommend_plan(plan(0, [(2,), (1,)], [0.6, 0.4], [0.1, 0.9])).actions == (2,)
    with pytest.raises(CompressionError):
        recommend_plan(CompressedPlan(0, (), (), ()))


def test_compress_tree_on_a_searched_tree():
    from app.search import PolicyParams, ScheduleSpec, Selection, backpropagate, rollout, select_and_expand
    from app.models import ScheduleKind

    tree = SearchTree(LineDomain(), 0.9)
    params = PolicyParams(ScheduleSpec(ScheduleKind.INVERSE_LOG), ScheduleSpec(ScheduleKind.INVERSE_LOG), 0.5)
    rng = np.random.default_rng(1)
    for now in range(40):
        leaf, path = select_and_expand(tree, Selection.BOLTZMANN, params, rng, now)
        actions = tree.path_actions(leaf) + rollout(tree.domain, tree.nodes[leaf].state, rng)
        backpropagate(tree, path, sum(actions) / 3, now, completion=actions)
    compressed = compress_tree(tree, 4, 3, 39, 1.0)
    assert len(compressed.candidates) == 3
    assert all(c.agent_id == 4 and len(c.actions) == 3 for c in compressed.candidates)
    assert len({c.actions for c in compressed.candidates}) == 3
    assert sum(compressed.pmf) == pytest.approx(1.0)
    assert list(compressed.values) == sorted(compressed.values, reverse=True)


def test_update_builds_on_the_carried_mass():
    own = plan(0, [(1,), (2,)], [0.9, 0.1])
    # equal estimates leave the carried mass untouched
    same = update_plan_distribution(own, {}, lambda profile: 0.5, 4, 1.0, np.random.default_rng(0))
    assert same.pmf == pytest.approx([0.9, 0.1])

    others = {1: plan(1, [(1,)], [1.0])}
    updated = plan(0, [(1,), (2,)], [0.5, 0.5])
    for _ in range(5):
        updated = update_plan_distribution(updated, others, distinct_utility, 3, 1.0, np.random.default_rng(0))
    # every round multiplies the odds of the complementary candidate by e^0.5
    assert updated.pmf[1] == pytest.approx(1.0 / (1.0 + np.exp(-2.5)))


def test_update_keeps_every_candidate_recoverable():
    own = plan(0, [(1,), (2,)], [1.0, 0.0])
    updated = update_plan_distribution(own, {}, lambda profile: 0.0, 1, 1.0, np.random.default_rng(0))
    assert updated.pmf[1] >= coordination.PMF_FLOOR
    assert sum(updated.pmf) == pytest.approx(1.0)


def test_update_is_monotone_in_the_estimate():
    rng = np.random.default_rng(21)
    for _ in range(200):
        size = int(rng.integers(2, 8))
        prior = rng.dirichlet(np.ones(size))
        scores = rng.random(size)
        temperature = float(rng.uniform(0.05, 2.0))
        chosen = int(rng.integers(size))
        own = plan(0, [(i,) for i in range(size)], prior / prior.sum())

        def scored(values):
            return lambda profile: float(values[profile[0][0]])

        raised = scores.copy()
        raised[chosen] += float(rng.uniform(0.0, 1.0))
        before = update_plan_distribution(own, {}, scored(scores), 1, temperature, rng)
        after = update_plan_distribution(own, {}, scored(raised), 1, temperature, rng)
        assert after.pmf[chosen] >= before.pmf[chosen] - 1e-12
        assert sum(after.pmf) == pytest.approx(1.0, abs=1e-9)


def test_two_agents_settle_on_complementary_leaves():
    leaves = {(1,): 1.0, (2,): 0.9}

    def leaf_sum(profile):
        return sum(leaves[leaf] for leaf in {tuple(s) for s in profile.values()}) / 1.9

    plans = {
        0: plan(0, [(1,), (2,)], [0.7, 0.3], [1.0, 0.9]),
        1: plan(1, [(1,), (2,)], [0.5, 0.5], [1.0, 0.9]),
    }
    rngs = {0: np.random.default_rng(0), 1: np.random.default_rng(1)}
    for round_index in range(20):
        temperature = plan_temperature(1.0, round_index)
        plans = {
            n: update_plan_distribution(plans[n], {m: plans[m] for m in plans if m != n},
                                        leaf_sum, 100, temperature, rngs[n])
            for n in plans
        }
    assert recommend_plan(plans[0]).actions == (1,)
    assert recommend_plan(plans[1]).actions == (2,)
    assert max(plans[0].pmf) > 0.99 and max(plans[1].pmf) > 0.99
