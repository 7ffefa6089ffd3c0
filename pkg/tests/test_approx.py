import math

import numpy as np
import pytest

from exact_ising.approx import (SpanningFamily, _Objective, apex_graph, approx_marginals,
                                build_apex, central_vertex, dsg_family, error_metrics,
                                exact_reference, independent_member, optimize_bound, psg_family,
                                random_grid_model, whole_graph_family)
from exact_ising.decomposition import single_node, validate
from exact_ising.errors import InfeasibleFamily
from exact_ising.graph import grid_graph, is_planar
from exact_ising.model import IsingModel
from exact_ising.oracle import brute_force_log_Z, brute_force_marginals


def test_apex_identity_small_grid():
    for seed in range(5):
        ap = random_grid_model(2, 2.0, seed)
        assert brute_force_log_Z(ap.model) - math.log(2) == pytest.approx(brute_force_log_Z(ap.grid), abs=1e-12)


def test_apex_edges_carry_singleton_marginals():
    ap = random_grid_model(3, 1.0, 4)
    pair_apex, _ = brute_force_marginals(ap.model)
    pair, single = brute_force_marginals(ap.grid)
    assert np.allclose(pair_apex[ap.n_grid_edges:], single, atol=1e-12)
    assert np.allclose(pair_apex[:ap.n_grid_edges], pair, atol=1e-12)
    assert ap.model.graph.edges[ap.apex_edge(4)] == (4, ap.apex)


def test_build_apex_rejects_bad_input():
    with pytest.raises(ValueError):
        build_apex(1, [0.0], [])
    with pytest.raises(ValueError):
        build_apex(3, np.zeros(9), np.zeros(5))


def test_exact_reference_matches_enumeration():
    ap = random_grid_model(3, 2.0, 1)
    ref = exact_reference(ap)
    pair, single = brute_force_marginals(ap.grid)
    assert ref.log_Z == pytest.approx(brute_force_log_Z(ap.grid), abs=1e-10)
    assert np.allclose(ref.pair, 0.5 * (1 + pair)) and np.allclose(ref.single, 0.5 * (1 + single))


# ---------------------------------------------------------------------------
# families

def _spans(mb, H):
    return {v for e in mb.pairs for v in e} == set(range(H * H + 1))


def test_psg_member_count_and_shape():
    fam = psg_family(3)
    assert len(fam.members) == 5
    for mb in fam.members:
        assert _spans(mb, 3) and mb.decomposition is None
        assert is_planar(mb.graph)
    assert np.all(fam.coverage() >= 1)
    assert len(psg_family(8).members) == 2 * 7 + 1


def test_dsg_member_count_and_shape():
    fam = dsg_family(4)
    assert len(fam.members) == 5
    for mb in fam.members[:-1]:
        assert _spans(mb, 4)
        assert validate(mb.graph, mb.decomposition) == []
    assert np.all(fam.coverage() >= 1)
    assert len(dsg_family(8).members) == 2 * 6 + 1
    for mb in dsg_family(8).members[:-1]:
        assert validate(mb.graph, mb.decomposition) == []


def test_members_accepted_by_engines():
    ap = random_grid_model(4, 1.0, 0)
    for fam in (psg_family(4), dsg_family(4)):
        for mb in fam.members:
            J = ap.model.J[mb.edges]
            lz, M = mb.evaluate(J)
            sub = IsingModel(mb.graph, J)
            assert lz == pytest.approx(brute_force_log_Z(sub), abs=1e-9)
            assert np.allclose(M, brute_force_marginals(sub)[0], atol=1e-9)


def test_family_size_limits():
    with pytest.raises(ValueError):
        psg_family(2)
    with pytest.raises(ValueError):
        dsg_family(3)


def test_infeasible_family():
    ap = random_grid_model(3, 1.0, 0)
    with pytest.raises(InfeasibleFamily):
        optimize_bound(ap, SpanningFamily("apex-only", 3, [independent_member(3)]))
    with pytest.raises(InfeasibleFamily):
        optimize_bound(ap, psg_family(4))


# ---------------------------------------------------------------------------
# bounds

@pytest.mark.parametrize("alpha", [0.5, 3.0])
def test_psg_bound_above_exact(alpha):
    rng = np.random.default_rng(int(alpha * 10))
    for _ in range(3):
        ap = random_grid_model(3, alpha, rng)
        res = optimize_bound(ap, psg_family(3), max_iter=60)
        assert res.log_Z_grid >= brute_force_log_Z(ap.grid) - 1e-8
        assert res.residual <= 1e-8


def test_dsg_bound_above_exact():
    rng = np.random.default_rng(5)
    for _ in range(2):
        ap = random_grid_model(4, 2.0, rng)
        res = optimize_bound(ap, dsg_family(4), max_iter=60)
        assert res.log_Z_grid >= brute_force_log_Z(ap.grid) - 1e-8
        assert res.residual <= 1e-8


def test_whole_graph_member_is_exact():
    ap = random_grid_model(3, 2.0, 3)
    fam = whole_graph_family(ap, single_node(apex_graph(3), c=10))
    res = optimize_bound(ap, fam)
    ex = exact_reference(ap)
    assert res.log_Z_grid == pytest.approx(ex.log_Z, abs=1e-10)
    e = error_metrics(res, ex)
    assert e == pytest.approx((0.0, 0.0, 0.0), abs=1e-10)


def test_zero_parameters_give_half():
    g = grid_graph(3, 3)
    ap = build_apex(3, np.zeros(9), np.zeros(g.m))
    res = optimize_bound(ap, psg_family(3), max_iter=20)
    pair, single = approx_marginals(res)
    assert np.allclose(pair, 0.5) and np.allclose(single, 0.5)
    assert res.log_Z_grid == pytest.approx(9 * math.log(2), abs=1e-10)


def test_error_metrics_signs():
    ap = random_grid_model(4, 1.0, 9)
    res = optimize_bound(ap, psg_family(4), max_iter=40)
    e = error_metrics(res, exact_reference(ap))
    assert e[0] >= 0 and all(np.isfinite(e)) and e[1] >= 0 and e[2] >= 0
    assert central_vertex(4) == 10 and central_vertex(8) == 36


# ---------------------------------------------------------------------------
# optimizer internals

def _fd_grad(f, x, h=1e-4):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("family", [psg_family, dsg_family])
def test_member_gradients_match_finite_differences(family):
    ap = random_grid_model(4, 2.0, 11)
    rng = np.random.default_rng(0)
    for mb in family(4).members[:3]:
        J = ap.model.J[mb.edges] * rng.uniform(0.5, 2.0, len(mb.edges))
        _, M = mb.evaluate(J)
        fd = _fd_grad(lambda x: mb.evaluate(x)[0], J)
        assert np.abs(M - fd).max() <= 1e-5


def test_objective_gradient_matches_finite_differences():
    ap = random_grid_model(3, 1.0, 2)
    obj = _Objective(ap, psg_family(3))
    x = obj.initial()
    rng = np.random.default_rng(1)
    x = x + rng.normal(0, 0.2, len(x))
    x[obj.L:] = rng.uniform(0.5, 2.0, obj.R)
    _, g = obj.value_and_grad(x)
    fd = _fd_grad(lambda y: obj.value_and_grad(y)[0], x)
    assert np.abs(g - fd).max() <= 1e-5


def test_trace_monotone_and_reproducible():
    ap = random_grid_model(4, 2.0, 6)
    a = optimize_bound(ap, dsg_family(4), max_iter=30)
    assert all(t1 <= t0 + 1e-12 for t0, t1 in zip(a.trace, a.trace[1:]))
    assert a.trace[-1] == pytest.approx(a.bound)
    b = optimize_bound(random_grid_model(4, 2.0, 6), dsg_family(4), max_iter=30)
    assert a.trace == b.trace
    assert a.iterations <= 30 and np.isclose(a.rho.sum(), 1.0)
