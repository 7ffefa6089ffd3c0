"""Hand-built graphs shared by several test modules."""
import networkx as nx
import numpy as np

from exact_ising.graph import (Graph, complete_bipartite, complete_graph, cycle_graph, expanded_dual,
                               grid_graph, planar_embed, triangulate)
from exact_ising.minorfree import mobius_ladder
from exact_ising.model import IsingModel


def glue(*parts):
    """Union of ``(n, edges, relabel)`` parts; ``relabel`` maps local -> global ids."""
    edges = set()
    n = 0
    for g, mp in parts:
        for a, b in g.edges:
            x, y = mp[a], mp[b]
            edges.add((min(x, y), max(x, y)))
            n = max(n, x + 1, y + 1)
    return Graph(n, sorted(edges))


def shift(g, base, fixed=None):
    """Map local ids to ``base + i`` except for the ones pinned in ``fixed``."""
    fixed = dict(fixed or {})
    mp, nxt = {}, base
    for v in range(g.n):
        if v in fixed:
            mp[v] = fixed[v]
        else:
            mp[v] = nxt
            nxt += 1
    return mp


def wheel(k):
    """Hub 0 plus rim 1..k."""
    rim = [(i, i % k + 1) for i in range(1, k + 1)]
    return Graph(k + 1, [(0, i) for i in range(1, k + 1)] + rim)


def drop_edges(g, pairs):
    pairs = {tuple(sorted(p)) for p in pairs}
    return Graph(g.n, [e for e in g.edges if e not in pairs])


def k5_free_fixtures():
    """Nonplanar K5-free graphs (each contains K33) with at most 15 vertices."""
    k33 = complete_bipartite(3, 3)          # sides {0,1,2} and {3,4,5}
    v8 = mobius_ladder(4)
    out = {"K33": k33, "V8": v8, "V6": mobius_ladder(3)}
    # 1-sum and 2-sums with planar pieces
    out["K33+K4@vertex"] = glue((k33, shift(k33, 0)), (complete_graph(4), shift(complete_graph(4), 6, {0: 0})))
    out["K33+W5@edge"] = glue((k33, shift(k33, 0)), (wheel(5), shift(wheel(5), 6, {0: 0, 1: 3})))
    out["V8+C5@edge"] = glue((v8, shift(v8, 0)), (cycle_graph(5), shift(cycle_graph(5), 8, {0: 0, 1: 1})))
    out["K33+K33@edge"] = glue((k33, shift(k33, 0)), (k33, shift(k33, 6, {0: 0, 3: 3})))
    out["V8+K33@edge"] = glue((v8, shift(v8, 0)), (k33, shift(k33, 8, {0: 0, 3: 4})))
    # 3-sums: one side of K33 glued onto a triangle of a planar piece whose
    # triangle edges are then deleted
    w = wheel(6)
    g = glue((k33, shift(k33, 0)), (w, shift(w, 6, {0: 0, 1: 1, 2: 2})))
    out["K33+W6@3cut"] = drop_edges(g, [(0, 1), (1, 2), (0, 2)]) if not g.has_edge(0, 2) else drop_edges(g, [(0, 1), (0, 2), (1, 2)])
    k4 = complete_graph(4)
    g = glue((k33, shift(k33, 0)), (k4, shift(k4, 6, {0: 0, 1: 1, 2: 2})), (k4, shift(k4, 7, {0: 0, 1: 1, 2: 2})))
    out["K33+2K4@3cut"] = drop_edges(g, [(0, 1), (0, 2), (1, 2)])
    g = glue((k33, shift(k33, 0)), (k33, shift(k33, 6, {0: 0, 1: 1, 2: 2})))
    out["K33+K33@3cut"] = g
    # 3-sum keeping the triangle
    g = glue((k33, shift(k33, 0)), (k4, shift(k4, 6, {0: 3, 1: 4, 2: 5})))
    out["K33+K4@triangle"] = g
    # chain of pieces
    g = glue((k33, shift(k33, 0)), (v8, shift(v8, 6, {0: 5})))
    out["K33-V8@vertex"] = g
    return out


def random_couplings(g, seed, std=1.0):
    return IsingModel(g, np.random.default_rng(seed).normal(0.0, std, g.m))


def star_of(g):
    """Expanded dual (as an embedding) of a planar graph, triangulating first."""
    emb = planar_embed(g)
    if not emb.is_triangulated():
        emb, _ = triangulate(emb)
    return expanded_dual(emb).star


def degree3_fixtures():
    """Planar graphs of max degree 3 with at most 20 vertices."""
    out = [Graph(2, [(0, 1)]), cycle_graph(4), cycle_graph(6), cycle_graph(10)]
    out.append(Graph(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]))      # K4
    cube = Graph(8, [(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (6, 7), (4, 7),
                     (0, 4), (1, 5), (2, 6), (3, 7)])
    out.append(cube)
    prism = Graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5)])
    out.append(prism)
    out.append(Graph(8, [(i, i + 1) for i in range(7)] + [(0, 7), (0, 4), (2, 6)]))
    ladder = grid_graph(2, 7)
    out.append(ladder)
    out.append(star_of(complete_graph(3)).graph)
    out.append(star_of(Graph(3, [(0, 1), (1, 2)])).graph)
    out.append(grid_graph(2, 10))
    dodeca = nx.dodecahedral_graph()
    out.append(Graph(20, sorted(tuple(sorted(e)) for e in dodeca.edges)))
    return out


# criterion number -> (passed, detail); filled by test_acceptance and
# printed in the terminal summary
ACCEPTANCE = {}
