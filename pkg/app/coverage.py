"""
Graph-coverage inspection: agents walk a weighted roadmap from a shared depot
under a travel budget, and a target counts as inspected once any agent
traverses one of its covering edges.
"""
import logging
from pathlib import Path
from typing import Dict, FrozenSet, List, Tuple

import networkx as nx
import numpy as np

from app.environments import EnvironmentConstructionError, EnvironmentModel, Profile
from app.models import CoverageEdge, CoverageTarget, CoverageVertex, GraphCoverageSpec

logger = logging.getLogger(__name__)

BUDGET_TOLERANCE = 1e-9

# (vertex, remaining travel budget)
WalkState = Tuple[int, float]


def _segment_distances(point: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Euclidean distance from one point to every segment starts[i] -> ends[i]."""
    direction = ends - starts
    length_sq = np.einsum("ij,ij->i", direction, direction)
    t = np.clip(np.einsum("ij,ij->i", point - starts, direction) / length_sq, 0.0, 1.0)
    closest = starts + t[:, None] * direction
    return np.linalg.norm(point - closest, axis=1)


def synthesize_coverage_instance(
    vertex_count: int,
    target_count: int,
    radius: float,
    rng: np.random.Generator,
    budget: float = 60.0,
    agents: int = 3,
    neighbours: int = 4,
    extent: float = 100.0,
) -> GraphCoverageSpec:
    """
    Random planar roadmap with k-nearest-neighbour edges, trimmed to its largest
    connected component. The depot is the vertex nearest the centroid; a target
    with no edge inside its radius is snapped to its nearest edge.
    """
    if not vertex_count >= target_count >= 1:
        raise EnvironmentConstructionError("Need vertex_count >= target_count >= 1")

    points = rng.uniform(0.0, extent, size=(vertex_count, 2))
    distances = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)

    graph = nx.Graph()
    graph.add_nodes_from(range(vertex_count))
    for i in range(vertex_count):
        for j in np.argsort(distances[i], kind="stable")[1:neighbours + 1]:
            if distances[i, j] > 0:
                graph.add_edge(i, int(j), weight=float(distances[i, j]))

    component = sorted(max(nx.connected_components(graph), key=len))
    relabel = {old: new for new, old in enumerate(component)}
    kept = points[component]
    centroid = kept.mean(axis=0)
    depot = int(np.argmin(np.linalg.norm(kept - centroid, axis=1)))

    edge_pairs = sorted(
        (min(relabel[u], relabel[v]), max(relabel[u], relabel[v]))
        for u, v in graph.subgraph(component).edges
    )
    edges = [
        CoverageEdge(id=i, u=u, v=v, weight=float(np.linalg.norm(kept[u] - kept[v])))
        for i, (u, v) in enumerate(edge_pairs)
    ]
    if not edges:
        raise EnvironmentConstructionError("Roadmap has no edges")
    starts = np.array([kept[e.u] for e in edges])
    ends = np.array([kept[e.v] for e in edges])

    targets = []
    for target_id, point in enumerate(rng.uniform(0.0, extent, size=(target_count, 2))):
        gaps = _segment_distances(point, starts, ends)
        covering = np.flatnonzero(gaps <= radius).tolist() or [int(np.argmin(gaps))]
        targets.append(CoverageTarget(id=target_id, x=float(point[0]), y=float(point[1]),
                                      covering_edges=covering))

    logger.debug(f"Synthesized roadmap with {len(component)} vertices, {len(edges)} edges, {len(targets)} targets")
    return GraphCoverageSpec(
        vertices=[CoverageVertex(id=i, x=float(x), y=float(y)) for i, (x, y) in enumerate(kept)],
        edges=edges,
        targets=targets,
        depot=depot,
        budget=budget,
        agents=agents,
    )


def save_coverage_instance(spec: GraphCoverageSpec, path) -> None:
    Path(path).write_text(spec.model_dump_json(indent=2))


def load_coverage_instance(path) -> GraphCoverageSpec:
    return GraphCoverageSpec.model_validate_json(Path(path).read_text())


class GraphCoverage(EnvironmentModel):
    """Joint utility is the fraction of targets with at least one traversed covering edge."""

    def __init__(self, spec: GraphCoverageSpec, env_id: str = "coverage"):
        super().__init__(spec.agents, 1.0, env_id)
        self.spec = spec
        self.edge_weights: Dict[int, float] = {edge.id: edge.weight for edge in spec.edges}
        self.adjacency: Dict[int, List[Tuple[int, int, float]]] = {vertex.id: [] for vertex in spec.vertices}
        for edge in spec.edges:
            self.adjacency[edge.u].append((edge.id, edge.v, edge.weight))
            self.adjacency[edge.v].append((edge.id, edge.u, edge.weight))
        for incident in self.adjacency.values():
            incident.sort()

        covered_by: Dict[int, set] = {edge.id: set() for edge in spec.edges}
        for target in spec.targets:
            for edge_id in target.covering_edges:
                covered_by[edge_id].add(target.id)
        self.covered_by: Dict[int, FrozenSet[int]] = {e: frozenset(t) for e, t in covered_by.items()}

    def start_state(self, agent: int) -> WalkState:
        return (self.spec.depot, self.spec.budget)

    def actions(self, agent: int, state: WalkState) -> List[int]:
        vertex, remaining = state
        return [edge_id for edge_id, _, weight in self.adjacency[vertex]
                if weight <= remaining + BUDGET_TOLERANCE]

    def step(self, agent: int, state: WalkState, action: int) -> WalkState:
        vertex, remaining = state
        for edge_id, other, weight in self.adjacency[vertex]:
            if edge_id == action:
                return (other, remaining - weight)
        raise KeyError(f"Edge {action} is not incident to vertex {vertex}")

    def budget(self, agent: int) -> float:
        return self.spec.budget

    def sequence_cost(self, agent: int, actions) -> float:
        return sum(self.edge_weights[edge_id] for edge_id in actions)

    def covered_targets(self, profile: Profile) -> FrozenSet[int]:
        covered = set()
        for actions in profile.values():
            for edge_id in actions:
                covered |= self.covered_by[edge_id]
        return frozenset(covered)

    def utility(self, profile: Profile) -> float:
        return len(self.covered_targets(profile)) / len(self.spec.targets)


def build_graph_coverage(spec: GraphCoverageSpec, env_id: str = "coverage") -> GraphCoverage:
    """
    :raises EnvironmentConstructionError: if some vertex cannot be reached from the depot
    """
    graph = nx.Graph()
    graph.add_nodes_from(vertex.id for vertex in spec.vertices)
    graph.add_edges_from((edge.u, edge.v) for edge in spec.edges)
    if not nx.is_connected(graph):
        raise EnvironmentConstructionError("Coverage roadmap is not connected from the depot")
    return GraphCoverage(spec, env_id)
