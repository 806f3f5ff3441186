"""
Multi-goal Frozen Lake with deterministic moves.

Maps are plain-text grids: S start (top-left), F frozen, H hole, G goal.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from retrying import Retrying

from app.environments import EnvironmentConstructionError, EnvironmentModel, Profile

logger = logging.getLogger(__name__)

# action -> (row delta, column delta)
MOVES = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}
STEP_DECAY = 0.99
CELL_CLASSES = frozenset("SFHG")

Cell = Tuple[int, int]
# (row, column, steps taken, fallen into a hole)
LakeState = Tuple[int, int, int, bool]


class MapGenerationError(Exception):
    """Raised when no valid map was found within the attempt cap"""
    pass


class _UnreachableGoal(Exception):
    pass


@dataclass(frozen=True)
class FrozenLakeSpec:
    grid: Tuple[str, ...]
    step_budget: int = 100
    agents: int = 2
    decay: float = STEP_DECAY

    def __post_init__(self):
        if not self.grid or any(len(row) != len(self.grid[0]) for row in self.grid):
            raise EnvironmentConstructionError("Frozen Lake rows must be non-empty and equally long")
        if any(cell not in CELL_CLASSES for row in self.grid for cell in row):
            raise EnvironmentConstructionError("Frozen Lake cells must be one of S, F, H, G")
        if self.grid[0][0] != "S" or sum(row.count("S") for row in self.grid) != 1:
            raise EnvironmentConstructionError("Frozen Lake needs exactly one start, in the top-left corner")
        if not self.goals:
            raise EnvironmentConstructionError("Frozen Lake needs at least one goal")

    @property
    def height(self) -> int:
        return len(self.grid)

    @property
    def width(self) -> int:
        return len(self.grid[0])

    @property
    def goals(self) -> List[Cell]:
        return [(r, c) for r, row in enumerate(self.grid) for c, cell in enumerate(row) if cell == "G"]

    def to_text(self) -> str:
        return "\n".join(self.grid) + "\n"

    @classmethod
    def from_text(cls, text: str, step_budget: int = 100, agents: int = 2) -> "FrozenLakeSpec":
        rows = tuple(line.strip() for line in text.splitlines() if line.strip())
        return cls(grid=rows, step_budget=step_budget, agents=agents)


def reachable_cells(grid: Sequence[str], start: Cell = (0, 0)) -> set:
    """Depth-first search over 4-connected cells that are not holes."""
    height, width = len(grid), len(grid[0])
    seen = {start}
    stack = [start]
    while stack:
        r, c = stack.pop()
        for dr, dc in MOVES.values():
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and (nr, nc) not in seen and grid[nr][nc] != "H":
                seen.add((nr, nc))
                stack.append((nr, nc))
    return seen


def _draw_map(width: int, height: int, hole_probability: float, goal_count: int,
              rng: np.random.Generator) -> Tuple[str, ...]:
    cells = [(r, c) for r in range(height) for c in range(width) if (r, c) != (0, 0)]
    goal_indices = set(rng.choice(len(cells), size=goal_count, replace=False).tolist())
    holes = rng.random(len(cells)) < hole_probability
    layout = [["F"] * width for _ in range(height)]
    layout[0][0] = "S"
    for index, (r, c) in enumerate(cells):
        if index in goal_indices:
            layout[r][c] = "G"
        elif holes[index]:
            layout[r][c] = "H"
    grid = tuple("".join(row) for row in layout)
    reachable = reachable_cells(grid)
    if any((r, c) not in reachable for r, c in (cells[i] for i in goal_indices)):
        raise _UnreachableGoal()
    return grid


def generate_frozen_lake_map(
    width: int,
    height: int,
    hole_probability: float,
    goal_count: int,
    rng: np.random.Generator,
    step_budget: int = 100,
    agents: int = 2,
    attempt_cap: int = 10_000,
) -> FrozenLakeSpec:
    """
    Draw maps until every goal is reachable from the start.

    Args:
        width: number of columns
        height: number of rows
        hole_probability: chance that a non-start, non-goal cell is a hole
        goal_count: number of goal cells, placed uniformly at random
        rng: generator consumed by every attempt, so a fixed seed gives a fixed map
        attempt_cap: regenerations allowed before giving up

    Raises:
        MapGenerationError: if no valid map is found within `attempt_cap` attempts
    """
    if not 0.0 <= hole_probability < 1.0:
        raise ValueError("hole_probability must lie in [0, 1)")
    if goal_count < 1 or goal_count > width * height - 1:
        raise ValueError(f"Cannot place {goal_count} goals on a {width}x{height} grid")

    retrier = Retrying(
        stop_max_attempt_number=attempt_cap,
        retry_on_exception=lambda e: isinstance(e, _UnreachableGoal),
    )
    try:
        grid = retrier.call(_draw_map, width, height, hole_probability, goal_count, rng)
    except _UnreachableGoal:
        logger.error(f"No valid {width}x{height} map after {attempt_cap} attempts")
        raise MapGenerationError(f"No map with reachable goals after {attempt_cap} attempts")
    return FrozenLakeSpec(grid=grid, step_budget=step_budget, agents=agents)


class FrozenLake(EnvironmentModel):
    """Each goal pays 0.99^t once, for the earliest arrival step t among the agents."""

    def __init__(self, spec: FrozenLakeSpec, env_id: str = "frozenlake"):
        super().__init__(spec.agents, float(len(spec.goals)), env_id)
        self.spec = spec
        self.goal_cells = spec.goals
        self.reachable = reachable_cells(spec.grid)

    def start_state(self, agent: int) -> LakeState:
        return (0, 0, 0, False)

    def actions(self, agent: int, state: LakeState) -> List[int]:
        r, c, steps, fallen = state
        if fallen or steps >= self.spec.step_budget:
            return []
        return [a for a, (dr, dc) in MOVES.items()
                if 0 <= r + dr < self.spec.height and 0 <= c + dc < self.spec.width]

    def step(self, agent: int, state: LakeState, action: int) -> LakeState:
        r, c, steps, _ = state
        dr, dc = MOVES[action]
        r, c = r + dr, c + dc
        return (r, c, steps + 1, self.spec.grid[r][c] == "H")

    def budget(self, agent: int) -> float:
        return float(self.spec.step_budget)

    def arrivals(self, agent: int, actions: Sequence[int]) -> Dict[Cell, int]:
        """First arrival step at each goal, following the same transition as planning."""
        state = self.start_state(agent)
        first: Dict[Cell, int] = {}
        for action in actions:
            if action not in self.actions(agent, state):
                break
            state = self.step(agent, state, action)
            cell = (state[0], state[1])
            if self.spec.grid[cell[0]][cell[1]] == "G" and cell not in first:
                first[cell] = state[2]
        return first

    def earliest_arrivals(self, profile: Profile) -> Dict[Cell, int]:
        earliest: Dict[Cell, int] = {}
        for agent, actions in profile.items():
            for cell, step in self.arrivals(agent, actions).items():
                earliest[cell] = min(step, earliest.get(cell, step))
        return earliest

    def utility(self, profile: Profile) -> float:
        return frozen_lake_utility(self, profile)

    def goal_count(self) -> int:
        return len(self.goal_cells)

    def goals_reached(self, profile: Profile) -> int:
        return len(self.earliest_arrivals(profile))


def frozen_lake_utility(lake: FrozenLake, profile: Mapping[int, Sequence[int]]) -> float:
    """Sum over goals of decay^t for the earliest arrival; walks stop at holes or the budget."""
    return sum(lake.spec.decay ** step for step in lake.earliest_arrivals(profile).values())
