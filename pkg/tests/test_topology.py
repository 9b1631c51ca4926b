from __future__ import annotations

import pytest

from asyncdual import build_topology, path_graph, random_geometric_graph
from asyncdual.experiment import RGG_DENSITY
from asyncdual.topology import radius_for_edge_count


def test_orientation_and_neighbors():
    t = build_topology(3, [(2, 1), (2, 3)])
    assert t.oriented_edges == ((1, 2), (2, 3))
    assert t.neighbor_map[1] == {2} and t.neighbor_map[2] == {3} and t.neighbor_map[3] == frozenset()
    assert t.updater_set == {1, 2}
    assert t.edge_index(2, 1) == 1 and t.edge_index(2, 3) == 2
    assert t.incident_edges(2) == [1, 2]


def test_single_agent():
    t = build_topology(1, [])
    assert t.oriented_edges == () and t.updater_set == frozenset() and t.num_edges == 0


def test_duplicates_merge():
    assert build_topology(3, [(1, 2), (2, 1), (1, 2)]).num_edges == 1


@pytest.mark.parametrize("edges", [[(1, 1)], [(0, 1)], [(1, 4)], [(1, 2, 3)]])
def test_bad_edges(edges):
    with pytest.raises(ValueError):
        build_topology(3, edges)


def test_no_agents():
    with pytest.raises(ValueError):
        build_topology(0, [])


def test_path50():
    t = path_graph(50)
    assert t.num_edges == 49 and t.connected and t.is_tree()
    assert all(len(t.neighbor_map[i]) == 1 for i in range(2, 50))


def test_rgg_trivial_cases():
    t = random_geometric_graph(2, 2.0, 0)
    assert t.oriented_edges == ((1, 2),)
    t = random_geometric_graph(5, 0.001, 7)
    assert t.num_edges == 0 and not t.connected


def test_rgg_reference_density():
    n = 50
    m = round(RGG_DENSITY * n * (n - 1) / 2)
    assert m == 358
    r = radius_for_edge_count(n, m, 0)
    t = random_geometric_graph(n, r, 0)
    assert t.num_edges == 358 and t.connected


def test_disconnected_flag():
    t = build_topology(4, [(1, 2), (3, 4)])
    assert not t.connected and not t.is_tree()
