import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exact_ising.errors import DisconnectedConditionSet, NonPlanar, NonZeroField
from exact_ising.generator import random_planar, random_planar_model
from exact_ising.graph import (Graph, complete_bipartite, complete_graph, cycle_graph,
                               expanded_dual, grid_graph, path_graph, planar_embed, triangulate)
from exact_ising.model import Condition, IsingModel
from exact_ising.oracle import ExactDistribution, brute_force_log_Z, brute_force_marginals
from exact_ising.planar import (PlanarTemplate, conditional_log_Z, conditional_sample,
                                log_Z_planar, pairwise_marginal, pairwise_marginals,
                                sample_planar)
from exact_ising.pm import PMModel, log_partition

from fixtures import drop_edges, random_couplings

K2 = Graph(2, [(0, 1)])


def test_zero_couplings_give_n_log_2():
    for g in [K2, cycle_graph(5), grid_graph(3, 3), Graph(6, [(0, 1), (2, 3)])]:
        m = IsingModel(g, np.zeros(g.m))
        assert log_Z_planar(m) == pytest.approx(g.n * math.log(2), abs=1e-12)


def test_single_edge():
    # frozen from brute_force_log_Z
    assert log_Z_planar(IsingModel(K2, [1.0])) == pytest.approx(1.8200751916029176, abs=1e-12)
    assert log_Z_planar(IsingModel(K2, [1.0])) == pytest.approx(math.log(4 * math.cosh(1.0)), abs=1e-12)


def test_triangle():
    m = IsingModel(complete_graph(3), [0.5, 0.5, 0.5])
    assert log_Z_planar(m) == pytest.approx(2.5339001344730763, abs=1e-12)


def test_isolated_vertices():
    g = Graph(4, [(0, 1)])
    assert log_Z_planar(IsingModel(g, [0.3])) == pytest.approx(2 * math.log(2) + math.log(4 * math.cosh(0.3)))


@pytest.mark.parametrize("seed", range(12))
def test_matches_brute_force(seed):
    n = 4 + seed
    m = random_planar_model(n, seed=seed, std=1.0)
    assert log_Z_planar(m) == pytest.approx(brute_force_log_Z(m), abs=1e-8)


@pytest.mark.parametrize("std", [3.0, 10.0])
def test_strong_couplings(std):
    for seed in range(5):
        m = random_planar_model(10, seed=seed, std=std)
        assert abs(log_Z_planar(m) - brute_force_log_Z(m)) <= 1e-8 * max(1.0, abs(brute_force_log_Z(m)))


def test_sparse_and_disconnected_graphs():
    g = drop_edges(random_planar(9, seed=1).graph, [(0, 1), (1, 2), (2, 3), (0, 2), (0, 3)])
    for h in [g, path_graph(6), Graph(7, [(0, 1), (1, 2), (0, 2), (4, 5), (5, 6)])]:
        m = random_couplings(h, seed=h.m)
        assert log_Z_planar(m) == pytest.approx(brute_force_log_Z(m), abs=1e-9)


def test_star_partition_identity():
    # weighted PM sum on the expanded dual with intercity weights exp(2 J)
    # equals Z exp(sum J) / 2
    for seed in range(5):
        m = random_planar_model(6 + seed, seed=seed, std=0.5)
        tri, _ = triangulate(planar_embed(m.graph))
        dual = expanded_dual(tri)
        star = dual.star.graph
        Jt = np.zeros(tri.graph.m)
        Jt[:m.graph.m] = m.J
        w = np.ones(star.m)
        for k, e in enumerate(dual.intercity_edges):
            w[e] = math.exp(2 * Jt[dual.g_map[k]])
        lz_star = log_partition(PMModel(star, w, dual.star))
        assert lz_star == pytest.approx(math.log(0.5) + brute_force_log_Z(m) + m.J.sum(), abs=1e-9)


def test_rejects_nonzero_field_and_nonplanar():
    with pytest.raises(NonZeroField):
        log_Z_planar(IsingModel(K2, [1.0], [0.1, 0.0]))
    with pytest.raises(NonPlanar):
        log_Z_planar(IsingModel(complete_graph(5), np.ones(10)))
    with pytest.raises(NonPlanar):
        sample_planar(IsingModel(complete_bipartite(3, 3), np.ones(9)), seed=0)


# ---------------------------------------------------------------------------
# sampling

def test_strong_ferromagnet_aligns():
    X = sample_planar(IsingModel(K2, [10.0]), seed=0, size=2000)
    assert np.mean(X[:, 0] == X[:, 1]) >= 0.999


def test_free_spins_are_uniform():
    g = grid_graph(2, 3)
    X = sample_planar(IsingModel(g, np.zeros(g.m)), seed=1, size=20_000)
    assert np.all(np.abs(X.mean(axis=0)) <= 0.03)
    assert set(np.unique(X)) == {-1, 1}


def test_single_sample_shape_and_reproducibility():
    m = random_planar_model(7, seed=3, std=1.0)
    x = sample_planar(m, seed=5)
    assert x.shape == (7,)
    assert np.array_equal(sample_planar(m, seed=5, size=30), sample_planar(m, seed=5, size=30))


@pytest.mark.parametrize("seed", range(3))
def test_sampling_total_variation(seed):
    m = random_planar_model(6 + seed, seed=seed, std=1.0)
    X = sample_planar(m, seed=100 + seed, size=100_000)
    assert ExactDistribution.from_model(m).total_variation(X) <= 0.02


# ---------------------------------------------------------------------------
# conditioning

@pytest.mark.parametrize("seed", range(5))
def test_one_spin_condition_halves_z(seed):
    m = random_planar_model(8, seed=seed, std=1.0)
    for v, s in [(0, 1), (3, -1)]:
        assert conditional_log_Z(m, [(v, s)]) == pytest.approx(log_Z_planar(m) - math.log(2), abs=1e-12)


def test_edge_condition_on_k2():
    assert conditional_log_Z(IsingModel(K2, [0.7]), {0: 1, 1: 1}) == pytest.approx(0.7, abs=1e-12)
    assert conditional_log_Z(IsingModel(K2, [0.7]), {0: 1, 1: -1}) == pytest.approx(-0.7, abs=1e-12)


def _connected_sets(g, k):
    for vs in itertools.combinations(range(g.n), k):
        inside = sum(g.has_edge(a, b) for a, b in itertools.combinations(vs, 2))
        if inside >= k - 1:
            yield vs


@pytest.mark.parametrize("k", [2, 3])
def test_conditionals_sum_to_z(k):
    m = random_planar_model(9, seed=k, std=1.0)
    vs = next(_connected_sets(m.graph, k))
    total = [conditional_log_Z(m, Condition(tuple(zip(vs, s))))
             for s in itertools.product([-1, 1], repeat=k)]
    lz = brute_force_log_Z(m)
    assert math.exp(np.logaddexp.reduce(total) - lz) == pytest.approx(1.0, abs=1e-8)


def test_conditional_matches_brute_force():
    m = random_planar_model(8, seed=4, std=1.0)
    u, v = m.graph.edges[0]
    w = next(x for x in range(m.n) if m.graph.has_edge(u, x) and m.graph.has_edge(v, x))
    cond = [(u, 1), (v, -1), (w, -1)]
    p = ExactDistribution.from_model(m).probabilities
    X = np.array([[1 if (i >> b) & 1 else -1 for b in range(m.n)] for i in range(1 << m.n)])
    mask = (X[:, u] == 1) & (X[:, v] == -1) & (X[:, w] == -1)
    assert conditional_log_Z(m, cond) == pytest.approx(brute_force_log_Z(m) + math.log(p[mask].sum()),
                                                       abs=1e-9)


def test_conditional_sampling_triangle():
    m = random_planar_model(7, seed=11, std=1.0)
    u, v = m.graph.edges[0]
    w = next(x for x in range(m.n) if m.graph.has_edge(u, x) and m.graph.has_edge(v, x))
    cond = [(u, -1), (v, 1), (w, 1)]
    X = conditional_sample(m, cond, seed=2, size=100_000)
    assert np.all(X[:, u] == -1) and np.all(X[:, v] == 1) and np.all(X[:, w] == 1)
    assert ExactDistribution.conditional(m, cond).total_variation(X) <= 0.03


def test_conditional_sampling_single_spin():
    m = random_planar_model(6, seed=2, std=1.0)
    X = conditional_sample(m, [(2, -1)], seed=0, size=50_000)
    assert np.all(X[:, 2] == -1)
    assert ExactDistribution.conditional(m, [(2, -1)]).total_variation(X) <= 0.02
    x = conditional_sample(m, [(2, 1)], seed=0)
    assert x.shape == (6,) and x[2] == 1


def test_condition_rejections():
    g = path_graph(4)
    m = IsingModel(g, np.ones(g.m))
    with pytest.raises(DisconnectedConditionSet):
        conditional_log_Z(m, [(0, 1), (2, 1)])
    with pytest.raises(ValueError):
        conditional_log_Z(m, [(0, 1), (1, 1), (2, 1), (3, 1)])
    with pytest.raises(NonZeroField):
        conditional_log_Z(IsingModel(g, np.ones(3), np.ones(4)), [(0, 1)])


# ---------------------------------------------------------------------------
# marginals

def test_edge_marginal_on_k2():
    assert pairwise_marginal(IsingModel(K2, [0.8]), 0) == pytest.approx(math.tanh(0.8), abs=1e-12)
    assert pairwise_marginal(IsingModel(K2, [0.8]), (1, 0)) == pytest.approx(math.tanh(0.8), abs=1e-12)


def test_zero_coupling_cycle_marginals_vanish():
    g = cycle_graph(6)
    assert np.allclose(pairwise_marginals(IsingModel(g, np.zeros(6))), 0.0, atol=1e-12)


def test_tree_marginals_are_tanh():
    g = Graph(6, [(0, 1), (0, 2), (2, 3), (2, 4), (4, 5)])
    J = np.array([0.3, -1.2, 2.0, 0.1, -0.5])
    assert np.allclose(pairwise_marginals(IsingModel(g, J)), np.tanh(J), atol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_marginals_match_brute_force(seed):
    m = random_planar_model(5 + 2 * seed, seed=seed, std=1.0)
    pair, _ = brute_force_marginals(m)
    assert np.allclose(pairwise_marginals(m), pair, atol=1e-9)


def test_marginal_rejects_missing_edge():
    with pytest.raises(ValueError):
        pairwise_marginal(IsingModel(path_graph(3), [1.0, 1.0]), (0, 2))


# ---------------------------------------------------------------------------
# reusable template

def test_template_matches_engine():
    g = random_planar(10, seed=8).graph
    T = PlanarTemplate(g)
    rng = np.random.default_rng(0)
    for _ in range(5):
        J = rng.normal(0, 1.0, g.m)
        m = IsingModel(g, J)
        lz, pair = T.evaluate(J, marginals=True)
        assert lz == pytest.approx(log_Z_planar(m), abs=1e-10)
        assert np.allclose(pair, pairwise_marginals(m), atol=1e-9)
        assert T.conditional_log_Z(J, Condition(((0, 1), (g.edges[0][1], -1)))) == pytest.approx(
            conditional_log_Z(m, [(0, 1), (g.edges[0][1], -1)]), abs=1e-10)


def test_template_with_cut_vertices_and_bridges():
    g = Graph(9, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5), (6, 7)])
    T = PlanarTemplate(g)
    J = np.linspace(-1.5, 1.5, g.m)
    m = IsingModel(g, J)
    lz, pair = T.evaluate(J, marginals=True)
    ref_pair, _ = brute_force_marginals(m)
    assert lz == pytest.approx(brute_force_log_Z(m), abs=1e-12)
    assert np.allclose(pair, ref_pair, atol=1e-10)


@pytest.mark.parametrize("seed", [5, 19, 20])
def test_template_marginals_strong_frustrated_couplings(seed, monkeypatch):
    # these models make K badly conditioned, so the template falls back to
    # determinant ratios for the edge probabilities
    calls = []
    orig = PlanarTemplate._deletion_probabilities

    def spy(*args):
        calls.append(1)
        return orig(*args)

    monkeypatch.setattr(PlanarTemplate, "_deletion_probabilities", staticmethod(spy))
    m = random_planar_model(14, seed=seed, std=6.0)
    lz, pair = PlanarTemplate(m.graph).evaluate(m.J, marginals=True)
    ref_pair, _ = brute_force_marginals(m)
    assert calls
    assert np.abs(pair - ref_pair).max() <= 1e-9
    assert lz == pytest.approx(brute_force_log_Z(m), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10**6), st.floats(0.1, 3.0))
def test_log_z_property(n, seed, std):
    m = random_planar_model(n, seed=seed, std=std)
    ref = brute_force_log_Z(m)
    assert abs(log_Z_planar(m) - ref) <= 1e-8 * max(1.0, abs(ref))
    assert abs(PlanarTemplate(m.graph).log_Z(m.J) - ref) <= 1e-8 * max(1.0, abs(ref))


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 10), st.integers(0, 10**6))
def test_marginals_bounded_and_relabel_invariant(n, seed):
    m = random_planar_model(n, seed=seed, std=1.0)
    p = pairwise_marginals(m)
    assert np.all(np.abs(p) <= 1.0)
    perm = np.random.default_rng(seed).permutation(n)
    h = Graph(n, sorted(tuple(sorted((int(perm[a]), int(perm[b])))) for a, b in m.graph.edges))
    Jh = np.array([m.J[m.graph.find_edge(int(np.flatnonzero(perm == a)[0]), int(np.flatnonzero(perm == b)[0]))]
                   for a, b in h.edges])
    assert log_Z_planar(IsingModel(h, Jh)) == pytest.approx(log_Z_planar(m), abs=1e-9)
