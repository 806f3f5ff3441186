from pathlib import Path

import numpy as np
import pytest

import app.frozen_lake as frozen_lake
from app.coverage import (
    GraphCoverage,
    build_graph_coverage,
    load_coverage_instance,
    save_coverage_instance,
    synthesize_coverage_instance,
)
from app.environments import (
    DeceptiveTreeSpec,
    EnvironmentConstructionError,
    InfeasibleSequenceError,
    build_deceptive_tree,
)
from app.frozen_lake import FrozenLake, FrozenLakeSpec, MapGenerationError, generate_frozen_lake_map, reachable_cells
from app.models import CoverageEdge, CoverageTarget, CoverageVertex, GraphCoverageSpec

LAKE_MAP = Path(__file__).parent / "frozen_lake_8x12.txt"
LEFT, DOWN, RIGHT, UP = 0, 1, 2, 3


@pytest.fixture
def dchain():
    return build_deceptive_tree(DeceptiveTreeSpec(depth=10, branching=2, agents=2))


@pytest.fixture
def lake():
    return FrozenLake(FrozenLakeSpec.from_text(LAKE_MAP.read_text()))


@pytest.fixture
def triangle():
    spec = GraphCoverageSpec(
        vertices=[CoverageVertex(id=0, x=0, y=0), CoverageVertex(id=1, x=3, y=0), CoverageVertex(id=2, x=0, y=4)],
        edges=[CoverageEdge(id=0, u=0, v=1, weight=3.0), CoverageEdge(id=1, u=1, v=2, weight=5.0),
               CoverageEdge(id=2, u=0, v=2, weight=4.0)],
        targets=[CoverageTarget(id=0, x=1.5, y=0, covering_edges=[0]),
                 CoverageTarget(id=1, x=0, y=2, covering_edges=[2]),
                 CoverageTarget(id=2, x=2, y=2, covering_edges=[1, 2])],
        depot=0,
        budget=8.0,
        agents=2,
    )
    return build_graph_coverage(spec)


def test_dchain_rewards(dchain):
    assert dchain.leaf_rewards[(1,) * 10] == 1.0
    assert dchain.leaf_rewards[(2,)] == pytest.approx(0.9)
    assert dchain.leaf_rewards[(1,) * 9 + (2,)] == 0.0
    assert len(dchain.leaf_rewards) == 11
    assert dchain.optimal_path == (1,) * 10
    assert dchain.utility_bound == pytest.approx(1.9)


def test_dchain_joint_utility_counts_distinct_leaves(dchain):
    assert dchain.utility({0: (1,) * 10, 1: (2,)}) == pytest.approx(1.9)
    assert dchain.utility({0: (2,), 1: (2,)}) == pytest.approx(0.9)
    assert dchain.utility({0: (1, 1)}) == 0.0
    assert dchain.utility({}) == 0.0


def test_dchain_actions(dchain):
    assert dchain.actions(0, ()) == [1, 2]
    assert dchain.actions(0, (1, 2)) == []
    assert dchain.step(1, (1,), 2) == (1, 2)


def test_modified_dchain():
    tree = build_deceptive_tree(DeceptiveTreeSpec(depth=20, branching=2, agents=2, reward_variant="modified"))
    assert tree.leaf_rewards[(2,)] == pytest.approx(0.5)
    assert tree.leaf_rewards[(1,) * 20] == 1.0


def test_custom_dchain_subtrees():
    spec = DeceptiveTreeSpec(
        depth=3, branching=2, agents=1, reward_variant="custom",
        term_rules=lambda path, depth: depth >= 4,
        value=lambda path: 0.25 * sum(a == 2 for a in path) / len(path),
    )
    tree = build_deceptive_tree(spec)
    assert tree.actions(0, (2,)) == [1, 2]
    assert (2, 1, 1, 1) in tree.leaf_rewards
    assert tree.leaf_rewards[(1, 1, 1)] == 1.0


def test_custom_dchain_must_terminate():
    spec = DeceptiveTreeSpec(
        depth=3, branching=2, agents=1, reward_variant="custom",
        term_rules=lambda path, depth: False, value=lambda path: 0.0, depth_cap=6,
    )
    with pytest.raises(EnvironmentConstructionError):
        build_deceptive_tree(spec)


def test_invalid_dchain_sizes():
    with pytest.raises(EnvironmentConstructionError):
        build_deceptive_tree(DeceptiveTreeSpec(depth=0, branching=2, agents=1))
    with pytest.raises(EnvironmentConstructionError):
        build_deceptive_tree(DeceptiveTreeSpec(depth=3, branching=2, agents=1, reward_variant="custom"))


def test_simulate_rejects_infeasible_sequences(dchain):
    assert dchain.simulate(0, (1, 1)) == (1, 1)
    with pytest.raises(InfeasibleSequenceError):
        dchain.simulate(0, (2, 1))
    assert dchain.is_feasible(0, (1,) * 10)
    assert not dchain.is_feasible(0, (3,))


def test_committed_view(dchain):
    view = dchain.advance({0: (1, 1), 1: (2,)})
    assert view.start_state(0) == (1, 1)
    assert view.actions(1, view.start_state(1)) == []
    # agent 1 already banked the 0.9 leaf
    assert view.utility({0: (1,) * 8}) == pytest.approx(1.0)
    assert view.utility({}) == 0.0
    assert view.budget(0) == float("inf")


def test_lake_loading(lake):
    assert (lake.spec.height, lake.spec.width) == (12, 8)
    assert lake.goal_cells == [(0, 3), (11, 7)]
    assert lake.utility_bound == 2.0
    assert lake.goal_count() == 2


def test_lake_rejects_bad_maps():
    with pytest.raises(EnvironmentConstructionError):
        FrozenLakeSpec.from_text("FFG\nSFF\n")
    with pytest.raises(EnvironmentConstructionError):
        FrozenLakeSpec.from_text("SFX\nFFG\n")
    with pytest.raises(EnvironmentConstructionError):
        FrozenLakeSpec.from_text("SFF\nFFF\n")


def test_lake_moves(lake):
    start = lake.start_state(0)
    assert lake.actions(0, start) == [DOWN, RIGHT]
    assert lake.step(0, start, RIGHT) == (0, 1, 1, False)


def test_lake_utility_discounts_by_arrival(lake):
    assert lake.utility({0: (RIGHT, RIGHT, RIGHT)}) == pytest.approx(0.99 ** 3)
    # walking on past a goal keeps the earlier arrival
    assert lake.utility({0: (RIGHT, RIGHT, RIGHT, RIGHT, LEFT)}) == pytest.approx(0.99 ** 3)
    assert lake.goals_reached({0: (RIGHT, RIGHT, RIGHT)}) == 1


def test_lake_goal_pays_once_for_the_earliest_agent(lake):
    early = (RIGHT, RIGHT, RIGHT)
    late = (DOWN, RIGHT, RIGHT, RIGHT, UP)
    assert lake.utility({0: early, 1: late}) == pytest.approx(0.99 ** 3)


def test_lake_holes_end_the_walk(lake):
    state = lake.simulate(0, (DOWN, DOWN, RIGHT, RIGHT))
    assert state[3] is True
    assert lake.actions(0, state) == []
    assert lake.utility({0: (DOWN, DOWN, RIGHT, RIGHT, UP, UP, RIGHT)}) == 0.0


def test_lake_step_budget():
    lake = FrozenLake(FrozenLakeSpec.from_text(LAKE_MAP.read_text(), step_budget=2))
    state = lake.simulate(0, (RIGHT, RIGHT))
    assert lake.actions(0, state) == []
    assert lake.utility({0: (RIGHT, RIGHT, RIGHT)}) == 0.0


def test_generated_map_has_reachable_goals():
    spec = generate_frozen_lake_map(8, 12, 0.2, 2, np.random.default_rng(3))
    assert len(spec.goals) == 2
    assert set(spec.goals) <= reachable_cells(spec.grid)
    again = generate_frozen_lake_map(8, 12, 0.2, 2, np.random.default_rng(3))
    assert again.grid == spec.grid


def test_map_generation_gives_up(monkeypatch):
    def never(*args):
        raise frozen_lake._UnreachableGoal()

    monkeypatch.setattr(frozen_lake, "_draw_map", never)
    with pytest.raises(MapGenerationError):
        generate_frozen_lake_map(8, 12, 0.2, 2, np.random.default_rng(0), attempt_cap=3)


def test_map_text_round_trip(lake):
    assert FrozenLakeSpec.from_text(lake.spec.to_text()).grid == lake.spec.grid


def test_coverage_actions_respect_budget(triangle):
    depot = triangle.start_state(0)
    assert depot == (0, 8.0)
    assert triangle.actions(0, depot) == [0, 2]
    after = triangle.step(0, depot, 2)
    assert after == (2, 4.0)
    # edge 1 costs 5, only edge 2 back to the depot fits
    assert triangle.actions(0, after) == [2]
    assert triangle.sequence_cost(0, (2, 2)) == 8.0
    assert triangle.actions(0, triangle.simulate(0, (2, 2))) == []


def test_coverage_utility(triangle):
    assert triangle.utility({0: (2,)}) == pytest.approx(2 / 3)
    assert triangle.utility({0: (2,), 1: (0,)}) == pytest.approx(1.0)
    assert triangle.utility({0: (0,), 1: (0,)}) == pytest.approx(1 / 3)
    assert triangle.covered_targets({0: (0, 1)}) == frozenset({0, 2})


def test_coverage_rejects_disconnected_roadmap():
    spec = GraphCoverageSpec(
        vertices=[CoverageVertex(id=0, x=0, y=0), CoverageVertex(id=1, x=1, y=0), CoverageVertex(id=2, x=9, y=9)],
        edges=[CoverageEdge(id=0, u=0, v=1, weight=1.0)],
        targets=[CoverageTarget(id=0, x=0.5, y=0, covering_edges=[0])],
        depot=0,
        budget=5.0,
    )
    with pytest.raises(EnvironmentConstructionError):
        build_graph_coverage(spec)


def test_synthesized_instances_are_valid():
    for seed in range(10):
        spec = synthesize_coverage_instance(50, 20, 5.0, np.random.default_rng(seed))
        env = build_graph_coverage(spec)
        edge_ids = {edge.id for edge in spec.edges}
        assert len(spec.targets) == 20
        assert all(set(t.covering_edges) <= edge_ids for t in spec.targets)
        assert env.actions(0, env.start_state(0))


def test_coverage_instance_file_round_trip(tmp_path):
    spec = synthesize_coverage_instance(30, 10, 5.0, np.random.default_rng(1))
    save_coverage_instance(spec, tmp_path / "instance.json")
    assert load_coverage_instance(tmp_path / "instance.json") == spec
    assert isinstance(build_graph_coverage(spec), GraphCoverage)
