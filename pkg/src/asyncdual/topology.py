"""Agent network, oriented edge set and dual-block ownership.

Agents are numbered ``1..N``. Every undirected edge ``{i, j}`` is stored once
as the oriented pair ``(i, j)`` with ``i < j``; agent ``i`` owns (updates) the
dual block of that edge. Edges are indexed ``1..|E|`` in lexicographic order
so traces line up across runs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "Topology",
    "build_topology",
    "path_graph",
    "random_geometric_graph",
    "radius_for_edge_count",
]


@dataclass(frozen=True)
class Topology:
    """Undirected agent graph with the ``i < j`` edge orientation.

    Attributes:
        num_agents: Number of agents ``N``.
        oriented_edges: Sorted tuple of ``(i, j)`` pairs with ``i < j`` (1-based).
        neighbor_map: ``N_i = {j : (i, j) in E}`` for every agent.
        updater_set: Agents owning at least one dual block.
        connected: Whether the graph is connected. Disconnected graphs are
            allowed; only global-variable problems need connectivity.
    """

    num_agents: int
    oriented_edges: tuple[tuple[int, int], ...]
    neighbor_map: dict[int, frozenset[int]] = field(repr=False, compare=False)
    updater_set: frozenset[int] = field(repr=False, compare=False)
    connected: bool = field(compare=False)

    @property
    def edges(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(e) for e in self.oriented_edges)

    @property
    def num_edges(self) -> int:
        return len(self.oriented_edges)

    def edge_index(self, i: int, j: int) -> int:
        """Return the 1-based index of edge ``{i, j}``."""
        key = (min(i, j), max(i, j))
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"no edge between agents {i} and {j}") from None

    @property
    def _index(self) -> dict[tuple[int, int], int]:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {e: k + 1 for k, e in enumerate(self.oriented_edges)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def incident_edges(self, agent: int) -> list[int]:
        """1-based indices of all edges touching ``agent``."""
        return [k + 1 for k, (i, j) in enumerate(self.oriented_edges) if agent in (i, j)]

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based endpoint arrays ``(tails, heads)`` in edge order."""
        if not self.oriented_edges:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy()
        arr = np.asarray(self.oriented_edges, dtype=np.int64) - 1
        return arr[:, 0].copy(), arr[:, 1].copy()

    def is_tree(self) -> bool:
        return self.connected and self.num_edges == self.num_agents - 1

    def to_list(self) -> list[list[int]]:
        """Serialized form: list of ``[i, j]`` pairs, 1-based."""
        return [[i, j] for i, j in self.oriented_edges]


def _is_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    adj: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == n


def build_topology(num_agents: int, edge_list: Iterable[Iterable[int]]) -> Topology:
    """Build a :class:`Topology` from 1-based agent pairs.

    Duplicate pairs (in either orientation) are merged.

    Raises:
        ValueError: on an empty agent set, a self-loop, or an endpoint outside
            ``1..num_agents``.
    """
    num_agents = int(num_agents)
    if num_agents < 1:
        raise ValueError(f"need at least one agent, got {num_agents}")
    pairs = set()
    for raw in edge_list:
        pair = tuple(int(v) for v in raw)
        if len(pair) != 2:
            raise ValueError(f"edge must have two endpoints, got {raw!r}")
        i, j = pair
        if not (1 <= i <= num_agents and 1 <= j <= num_agents):
            raise ValueError(f"edge {pair} has an endpoint outside 1..{num_agents}")
        if i == j:
            raise ValueError(f"self-loop at agent {i}")
        pairs.add((min(i, j), max(i, j)))
    oriented = tuple(sorted(pairs))
    neighbors: dict[int, set[int]] = {v: set() for v in range(1, num_agents + 1)}
    for i, j in oriented:
        neighbors[i].add(j)
    return Topology(
        num_agents=num_agents,
        oriented_edges=oriented,
        neighbor_map={v: frozenset(s) for v, s in neighbors.items()},
        updater_set=frozenset(v for v, s in neighbors.items() if s),
        connected=_is_connected(num_agents, oriented),
    )


def path_graph(num_agents: int) -> Topology:
    return build_topology(num_agents, [(i, i + 1) for i in range(1, num_agents)])


def _unit_square_points(num_agents: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).random((num_agents, 2))


def random_geometric_graph(num_agents: int, radius: float, seed: int) -> Topology:
    """Agents uniform in the unit square, edge iff distance <= ``radius``.

    Check ``.connected`` on the result; disconnected graphs are returned as is.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    pts = _unit_square_points(num_agents, seed)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    ii, jj = np.nonzero(np.triu(dist <= radius, k=1))
    return build_topology(num_agents, zip((ii + 1).tolist(), (jj + 1).tolist()))


def radius_for_edge_count(num_agents: int, num_edges: int, seed: int) -> float:
    """Smallest radius giving at least ``num_edges`` edges for this seed.

    Pairwise distances are continuous, so the count is hit exactly almost surely.
    """
    total = num_agents * (num_agents - 1) // 2
    if not 1 <= num_edges <= total:
        raise ValueError(f"edge count must be in 1..{total}, got {num_edges}")
    pts = _unit_square_points(num_agents, seed)
    iu = np.triu_indices(num_agents, k=1)
    d = np.sqrt(((pts[iu[0]] - pts[iu[1]]) ** 2).sum(axis=-1))
    return float(np.sort(d)[num_edges - 1])
