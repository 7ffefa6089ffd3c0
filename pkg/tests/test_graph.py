import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exact_ising.generator import random_planar
from exact_ising.graph import (Graph, NonPlanarWitness, PlanarEmbedding, complete_graph,
                               cycle_graph, expanded_dual, grid_graph, is_planar, path_graph,
                               planar_embed, triangulate)


def test_graph_rejects_self_loop_and_duplicates():
    with pytest.raises(ValueError):
        Graph(3, [(0, 0)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        Graph(2, [(0, 2)])


def test_graph_json_round_trip():
    g = grid_graph(3, 4)
    assert Graph.from_json(g.to_json()) == g


def test_k4_embedding_has_four_faces():
    emb = planar_embed(complete_graph(4))
    assert isinstance(emb, PlanarEmbedding)
    assert len(emb.faces) == 4
    assert emb.euler_ok()


def test_k5_is_not_planar():
    w = planar_embed(complete_graph(5))
    assert isinstance(w, NonPlanarWitness)
    assert w.kind == "K5"


def test_k33_witness():
    from exact_ising.graph import complete_bipartite
    w = planar_embed(complete_bipartite(3, 3))
    assert isinstance(w, NonPlanarWitness) and w.kind == "K33"


def test_random_planar_50_vertices_passes_euler():
    emb = planar_embed(random_planar(50, seed=3).graph)
    assert isinstance(emb, PlanarEmbedding) and emb.euler_ok()


def test_disconnected_embedding_euler():
    g = Graph(7, [(0, 1), (1, 2), (2, 0), (3, 4)])
    emb = planar_embed(g)
    assert emb.euler_ok()


def test_triangle_unchanged_by_triangulation():
    tri, added = triangulate(planar_embed(complete_graph(3)))
    assert added == [] or len(added) == 0
    assert tri.graph.m == 3 and tri.is_triangulated()


def test_four_cycle_triangulation_is_simple():
    # both faces of the 4-cycle are quadrilaterals, so each gets a chord
    tri, added = triangulate(planar_embed(cycle_graph(4)))
    assert tri.is_triangulated()
    assert len(set(tri.graph.edges)) == tri.graph.m
    assert tri.graph.edges[:4] == cycle_graph(4).edges
    assert len(added) >= 1


def test_path_triangulation():
    tri, added = triangulate(planar_embed(path_graph(5)))
    assert tri.is_triangulated()
    assert tri.graph.m == 3 * 5 - 6


def test_triangulation_idempotent():
    tri, _ = triangulate(planar_embed(grid_graph(3, 3)))
    again, added = triangulate(tri)
    assert len(added) == 0
    assert again.graph == tri.graph


def test_triangulation_rejects_small():
    with pytest.raises(ValueError):
        triangulate(planar_embed(path_graph(2)))


def test_expanded_dual_of_triangle():
    tri, _ = triangulate(planar_embed(complete_graph(3)))
    d = expanded_dual(tri)
    assert d.star.graph.n == 6 and d.star.graph.m == 9
    assert len(d.intercity_edges) == 3


def test_expanded_dual_of_k4():
    d = expanded_dual(planar_embed(complete_graph(4)))
    assert d.star.graph.n == 12


def test_expanded_dual_rejects_non_triangulated():
    with pytest.raises(ValueError):
        expanded_dual(planar_embed(cycle_graph(5)))


def _check_dual(tri):
    d = expanded_dual(tri)
    star = d.star.graph
    assert all(star.degree(v) == 3 for v in range(star.n))
    assert star.n == 2 * len(d.intercity_edges)
    assert len(d.intercity_edges) == tri.graph.m <= 3 * tri.graph.n - 6
    # intercity edges form a perfect matching
    covered = sorted(v for e in d.intercity_edges for v in star.edges[e])
    assert covered == list(range(star.n))
    # g_map hits every source edge once
    assert sorted(d.g_map) == list(range(tri.graph.m))
    # city edges form vertex-disjoint triangles
    city = nx.Graph([star.edges[e] for e in d.city_edges])
    comps = list(nx.connected_components(city))
    assert all(len(c) == 3 for c in comps)
    assert len(comps) == len(tri.faces)
    assert d.star.euler_ok()


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 10**6))
def test_expanded_dual_invariants(n, seed):
    _check_dual(random_planar(n, seed=seed))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 15), st.integers(0, 10**6))
def test_triangulation_properties(n, seed):
    g = nx.random_labeled_tree(n, seed=seed) if n > 1 else nx.empty_graph(1)
    extra = nx.gnp_random_graph(n, 0.3, seed=seed)
    for e in extra.edges:
        g.add_edge(*e)
        if not nx.check_planarity(g)[0]:
            g.remove_edge(*e)
    G = Graph(n, sorted(tuple(sorted(e)) for e in g.edges))
    emb = planar_embed(G)
    assert emb.euler_ok()
    if n < 3:
        return
    tri, added = triangulate(emb)
    assert tri.is_triangulated() and tri.euler_ok()
    assert tri.graph.edges[:G.m] == G.edges
    assert tri.graph.m == 3 * n - 6
    assert len(added) == tri.graph.m - G.m
    assert is_planar(tri.graph)
